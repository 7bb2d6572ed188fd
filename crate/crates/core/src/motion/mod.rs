//! Markov motions with absorption and their eigendata.

mod contact;
mod ctmc;
mod galton_watson;
mod killed_bm;
mod killed_ou;
mod transient_ou;

use std::fmt;

pub use contact::{contact_event_rates, ContactProcess};
pub use ctmc::ErgodicCtmc;
pub use galton_watson::{gw_event_rates, GaltonWatson};
pub use killed_bm::KilledDriftBm;
pub use killed_ou::KilledOu;
pub use transient_ou::TransientOu;

use crate::eigen::EigenData;
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::state::State;

/// Behaviour shared by every motion of the zoo.
pub trait Motion: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// True for pure-jump motions simulated event by event.
    fn is_jump_process(&self) -> bool;

    /// Checks that `x` is a non-absorbed point of this motion's state space.
    fn validate_state(&self, x: &State) -> Result<()>;

    /// Exact sample of the state after `dt >= 0`. Absorbed is a fixed point.
    fn advance(&self, x: &State, dt: f64, rng: &mut RandomStream) -> State;

    /// Outgoing jumps `(target, rate)` of a jump motion, `None` for diffusions.
    fn jump_rates(&self, _x: &State) -> Option<Vec<(State, f64)>> {
        None
    }

    /// Sub-probability transition density from `x` to `y` at time `t`.
    fn transition_density(&self, _x: &State, _y: &State, _t: f64) -> Option<f64> {
        None
    }

    fn eigen_data(&self) -> Result<EigenData>;

    /// Exact sample of the h-transformed motion at time `t`, if implemented.
    fn sample_tilted(&self, _x: &State, _t: f64, _rng: &mut RandomStream) -> Option<State> {
        None
    }

    /// ln E_x[M_s^2] in closed form, if known.
    fn log_martingale_second_moment(&self, _x: &State, _s: f64) -> Option<f64> {
        None
    }
}

/// The six motions of the zoo.
#[derive(Clone, Debug)]
pub enum MotionModel {
    ErgodicCtmc(ErgodicCtmc),
    GaltonWatson(GaltonWatson),
    ContactProcess(ContactProcess),
    KilledOu(KilledOu),
    TransientOu(TransientOu),
    KilledDriftBm(KilledDriftBm),
}

impl MotionModel {
    pub fn as_motion(&self) -> &dyn Motion {
        match self {
            MotionModel::ErgodicCtmc(m) => m,
            MotionModel::GaltonWatson(m) => m,
            MotionModel::ContactProcess(m) => m,
            MotionModel::KilledOu(m) => m,
            MotionModel::TransientOu(m) => m,
            MotionModel::KilledDriftBm(m) => m,
        }
    }

    pub fn name(&self) -> &'static str {
        self.as_motion().name()
    }

    pub fn is_jump_process(&self) -> bool {
        self.as_motion().is_jump_process()
    }

    /// True when particles of this motion can never be absorbed.
    pub fn never_absorbs(&self) -> bool {
        matches!(
            self,
            MotionModel::ErgodicCtmc(_) | MotionModel::TransientOu(_)
        )
    }

    pub fn validate_state(&self, x: &State) -> Result<()> {
        self.as_motion().validate_state(x)
    }

    pub fn advance(&self, x: &State, dt: f64, rng: &mut RandomStream) -> State {
        self.as_motion().advance(x, dt, rng)
    }

    pub fn jump_rates(&self, x: &State) -> Option<Vec<(State, f64)>> {
        self.as_motion().jump_rates(x)
    }

    pub fn transition_density(&self, x: &State, y: &State, t: f64) -> Option<f64> {
        if x.is_absorbed() || y.is_absorbed() || !(t > 0.0) {
            return None;
        }
        self.as_motion().transition_density(x, y, t)
    }

    pub fn eigen_data(&self) -> Result<EigenData> {
        self.as_motion().eigen_data()
    }

    pub fn sample_tilted(&self, x: &State, t: f64, rng: &mut RandomStream) -> Option<State> {
        self.as_motion().sample_tilted(x, t, rng)
    }

    pub fn log_martingale_second_moment(&self, x: &State, s: f64) -> Option<f64> {
        self.as_motion().log_martingale_second_moment(x, s)
    }
}

macro_rules! impl_from {
    ($($variant:ident),*) => {
        $(impl From<$variant> for MotionModel {
            fn from(m: $variant) -> Self {
                MotionModel::$variant(m)
            }
        })*
    };
}

impl_from!(
    ErgodicCtmc,
    GaltonWatson,
    ContactProcess,
    KilledOu,
    TransientOu,
    KilledDriftBm
);

/// State of `motion` at time `dt` of a path started at `x`.
pub fn step(motion: &MotionModel, x: &State, dt: f64, rng: &mut RandomStream) -> Result<State> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("time step {dt} must be positive")));
    }
    if x.is_absorbed() {
        return Err(Error::invalid("cannot step from the absorbed state"));
    }
    motion.validate_state(x)?;
    Ok(motion.advance(x, dt, rng))
}

/// Exact event-by-event simulation of a jump process over `[0, dt]`.
pub(crate) fn gillespie(
    x: &State,
    dt: f64,
    rng: &mut RandomStream,
    mut rates: impl FnMut(&State) -> Vec<(State, f64)>,
) -> State {
    let mut state = x.clone();
    let mut t = 0.0;
    while !state.is_absorbed() {
        let out = rates(&state);
        let total: f64 = out.iter().map(|(_, r)| r).sum();
        if !(total > 0.0) {
            return state;
        }
        t += rng.exponential(total);
        if t > dt {
            return state;
        }
        state = pick(out, total, rng);
    }
    state
}

fn pick(out: Vec<(State, f64)>, total: f64, rng: &mut RandomStream) -> State {
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let last = out.len() - 1;
    for (i, (s, r)) in out.into_iter().enumerate() {
        acc += r;
        if target < acc || i == last {
            return s;
        }
    }
    unreachable!("rate list is non-empty")
}

/// Brownian bridge from `x > 0` to `y > 0` over time `t` stays positive with
/// probability `1 - exp(-2xy/t)`.
pub(crate) fn bridge_survives(x: f64, y: f64, t: f64, rng: &mut RandomStream) -> bool {
    y > 0.0 && rng.uniform() >= (-2.0 * x * y / t).exp()
}

/// Norm of a three-dimensional Gaussian vector centred at `(x, 0, 0)` with
/// per-coordinate variance `var`: a Bessel(3) process at that time.
pub(crate) fn bessel3(x: f64, var: f64, rng: &mut RandomStream) -> f64 {
    let s = var.sqrt();
    let a = x + s * rng.standard_normal();
    let b = s * rng.standard_normal();
    let c = s * rng.standard_normal();
    (a * a + b * b + c * c).sqrt()
}

pub(crate) fn require_real_pos(name: &str, x: &State) -> Result<f64> {
    match *x {
        State::RealPos(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(Error::invalid(format!(
            "{name} needs a RealPos state, got {x:?}"
        ))),
    }
}
