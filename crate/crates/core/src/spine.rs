//! One- and two-path estimators of population moments.
//!
//! Many-to-one: E_x[Σ_u f(u_t)] = e^{r(m1-1)t} E_x[f(X_t)].
//! Many-to-two: E_x[Σ_{u,v} f(u_t) g(v_t)] =
//! e^{2r(m1-1)t} E[e^{[Var(m) + (m1-1)^2] r (E ∧ t)} f(X¹_t) g(X²_t)],
//! where the two spines share one path up to E ~ Exp((m2 - m1) r) and move
//! independently afterwards.
//!
//! The estimator splits this into the diagonal part E ≥ t, which equals
//! e^{r(m1-1)t} E_x[f g(X_t)], and the part E < t, whose split time is drawn
//! from the law on [0, t] with density proportional to e^{-r(m1-1)s}. Under
//! that law the split weight is constant.
//!
//! Paths are simulated under P in chunks of fixed size; chunk `c` draws from
//! stream `c` of a seed derived from the caller's stream, so results do not
//! depend on the thread count.

use rayon::prelude::*;

use crate::eigen::EigenData;
use crate::error::{Error, Result};
use crate::law::BranchingLaw;
use crate::motion::MotionModel;
use crate::rng::RandomStream;
use crate::state::State;
use crate::stats::{Accumulator, EstimateWithError};

const CHUNK: u64 = 2048;
const HEAVY_TAIL_CV: f64 = 10.0;
const MIN_ESS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TwoSpinePath {
    pub split_time: f64,
    /// State of the shared path at min(E, t).
    pub common: State,
    pub terminal_1: State,
    pub terminal_2: State,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoSpineEstimate {
    pub estimate: EstimateWithError,
    /// Empirical coefficient of variation of the weighted summands.
    pub weight_cv: f64,
    pub heavy_tailed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DoobEstimate {
    pub estimate: EstimateWithError,
    pub effective_sample_size: f64,
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("time {t} must be positive")))
    }
}

/// Evaluates `sample` on `n` independent paths, chunked over derived streams,
/// and returns the accumulators in chunk order.
fn chunked<F>(n: u64, rng: &mut RandomStream, sample: F) -> Vec<(Accumulator, Accumulator)>
where
    F: Fn(&mut RandomStream) -> (f64, f64) + Sync,
{
    let seed = rng.derive_seed();
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = RandomStream::for_replica(seed, c);
            let mut a = Accumulator::default();
            let mut b = Accumulator::default();
            for _ in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let (x, y) = sample(&mut stream);
                a.push(x);
                b.push(y);
            }
            (a, b)
        })
        .collect()
}

fn merge(parts: &[(Accumulator, Accumulator)]) -> (Accumulator, Accumulator) {
    parts.iter().fold(
        (Accumulator::default(), Accumulator::default()),
        |(mut a, mut b), (x, y)| {
            a.merge(x);
            b.merge(y);
            (a, b)
        },
    )
}

fn eval(f: &(dyn Fn(&State) -> f64 + Sync), s: &State) -> f64 {
    if s.is_absorbed() {
        0.0
    } else {
        f(s)
    }
}

/// e^{r(m1-1)t} times the Monte Carlo mean of f(X_t) over `n` paths.
pub fn many_to_one(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    f: &(dyn Fn(&State) -> f64 + Sync),
    t: f64,
    n: u64,
    rng: &mut RandomStream,
) -> Result<EstimateWithError> {
    check_time(t)?;
    motion.validate_state(x0)?;
    let parts = chunked(n, rng, |r| (eval(f, &motion.advance(x0, t, r)), 0.0));
    let (acc, _) = merge(&parts);
    Ok(acc.estimate().scaled((law.growth_rate() * t).exp()))
}

/// Samples the pair of spines at time `t`.
pub fn sample_two_spine(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    t: f64,
    rng: &mut RandomStream,
) -> Result<TwoSpinePath> {
    check_time(t)?;
    law.require_split()?;
    motion.validate_state(x0)?;
    Ok(two_spine(motion, law, x0, t, rng))
}

fn two_spine(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    t: f64,
    rng: &mut RandomStream,
) -> TwoSpinePath {
    let split = rng.exponential(law.split_rate());
    let common = motion.advance(x0, split.min(t), rng);
    let (terminal_1, terminal_2) = if split < t {
        (
            motion.advance(&common, t - split, rng),
            motion.advance(&common, t - split, rng),
        )
    } else {
        (common.clone(), common.clone())
    };
    TwoSpinePath {
        split_time: split,
        common,
        terminal_1,
        terminal_2,
    }
}

/// Two-spine estimate of E_x[Σ_{u,v} f(u_t) g(v_t)] over `n` pairs.
#[allow(clippy::too_many_arguments)]
pub fn many_to_two(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    f: &(dyn Fn(&State) -> f64 + Sync),
    g: &(dyn Fn(&State) -> f64 + Sync),
    t: f64,
    n: u64,
    rng: &mut RandomStream,
) -> Result<TwoSpineEstimate> {
    check_time(t)?;
    law.require_split()?;
    motion.validate_state(x0)?;
    let a = law.growth_rate();
    let k = law.split_rate();
    // ∫_0^t k e^{2at - as} ds, the total weight of splits before t.
    let off_diagonal = if a.abs() > 1e-12 {
        k * (2.0 * a * t).exp() * -(-a * t).exp_m1() / a
    } else {
        k * t
    };
    let diagonal = (a * t).exp();
    let mass = -(-a * t).exp_m1();
    let parts = chunked(n, rng, |r| {
        let y = motion.advance(x0, t, r);
        let u = r.uniform();
        let s = if a.abs() > 1e-12 {
            -(-u * mass).ln_1p() / a
        } else {
            u * t
        }
        .clamp(0.0, t);
        let common = motion.advance(x0, s, r);
        let x1 = motion.advance(&common, t - s, r);
        let x2 = motion.advance(&common, t - s, r);
        (
            diagonal * eval(f, &y) * eval(g, &y) + off_diagonal * eval(f, &x1) * eval(g, &x2),
            0.0,
        )
    });
    let (acc, _) = merge(&parts);
    let est = acc.estimate();
    let cv = if est.value != 0.0 {
        est.std_error * (est.n_effective as f64).sqrt() / est.value.abs()
    } else {
        0.0
    };
    let heavy_tailed = cv > HEAVY_TAIL_CV;
    if heavy_tailed {
        log::warn!("two-spine weights are heavy tailed (coefficient of variation {cv:.1})");
    }
    Ok(TwoSpineEstimate {
        estimate: est,
        weight_cv: cv,
        heavy_tailed,
    })
}

/// Ẽ_x[f(X_t)] = E_x[M_t f(X_t)] with paths simulated under P.
pub fn doob_weighted_expectation(
    motion: &MotionModel,
    eigen: &EigenData,
    x0: &State,
    f: &(dyn Fn(&State) -> f64 + Sync),
    t: f64,
    n: u64,
    rng: &mut RandomStream,
) -> Result<DoobEstimate> {
    check_time(t)?;
    motion.validate_state(x0)?;
    eigen.martingale_weight(x0, x0, 0.0)?;
    let parts = chunked(n, rng, |r| {
        let xt = motion.advance(x0, t, r);
        let w = eigen.martingale_weight(x0, &xt, t).unwrap_or(0.0);
        (w * eval(f, &xt), w)
    });
    let (values, weights) = merge(&parts);
    let ess = weights.effective_sample_size();
    if !(ess >= MIN_ESS) {
        return Err(Error::LowEffectiveSampleSize { ess });
    }
    Ok(DoobEstimate {
        estimate: values.estimate(),
        effective_sample_size: ess,
    })
}
