//! Brownian motion with drift -c killed at 0. λ = c²/2 and p(t) = t^{-3/2}:
//! the only motion of the zoo that is not λ-positive.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{bessel3, bridge_survives, require_real_pos, Motion};
use crate::eigen::{interval_mass, EigenData, Scaling};
use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::rng::RandomStream;
use crate::state::State;
use crate::test_set::TestSet;

#[derive(Clone, Debug)]
pub struct KilledDriftBm {
    c: f64,
}

impl KilledDriftBm {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::config(format!(
                "drift magnitude c = {c} must be positive"
            )));
        }
        Ok(KilledDriftBm { c })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn lambda(&self) -> f64 {
        0.5 * self.c * self.c
    }

    /// Distribution function of ν, the Gamma(2, c) law: 1 - e^{-cx}(1 + cx).
    pub fn nu_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x == f64::INFINITY {
            1.0
        } else {
            let cx = self.c * x;
            -(-cx).exp_m1() - cx * (-cx).exp()
        }
    }

    /// P_x(X_t > 0) = Φ((x - ct)/√t) - e^{2cx} Φ((-x - ct)/√t).
    pub fn survival(&self, x: f64, t: f64) -> f64 {
        let s = t.sqrt();
        let phi = |z: f64| 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
        let second = (2.0 * self.c * x + phi((-x - self.c * t) / s).ln()).exp();
        (phi((x - self.c * t) / s) - second).max(0.0)
    }
}

impl Motion for KilledDriftBm {
    fn name(&self) -> &'static str {
        "killed-drift-bm"
    }

    fn is_jump_process(&self) -> bool {
        false
    }

    fn validate_state(&self, x: &State) -> Result<()> {
        require_real_pos(self.name(), x).map(|_| ())
    }

    fn advance(&self, x: &State, dt: f64, rng: &mut RandomStream) -> State {
        let State::RealPos(x) = *x else {
            return x.clone();
        };
        if dt <= 0.0 {
            return State::RealPos(x);
        }
        let y = x - self.c * dt + dt.sqrt() * rng.standard_normal();
        // The bridge law does not depend on the drift.
        if bridge_survives(x, y, dt, rng) {
            State::real_pos(y)
        } else {
            State::Absorbed
        }
    }

    fn transition_density(&self, x: &State, y: &State, t: f64) -> Option<f64> {
        let (&State::RealPos(x), &State::RealPos(y)) = (x, y) else {
            return None;
        };
        let c = self.c;
        let free = (-(x - y).powi(2) / (2.0 * t)).exp();
        let mirror = (-(x + y).powi(2) / (2.0 * t)).exp();
        let tilt = (c * x - self.lambda() * t - c * y).exp();
        Some((tilt / (2.0 * PI * t).sqrt() * (free - mirror)).max(0.0))
    }

    fn eigen_data(&self) -> Result<EigenData> {
        let c = self.c;
        let l = self.lambda();
        let norm = (2.0 * PI * l * l).sqrt();
        let me = self.clone();
        let mass = move |set: &TestSet| -> Result<f64> {
            match *set {
                TestSet::Interval { a, b } => Ok(interval_mass(|x| me.nu_cdf(x), a, b)),
                _ => Err(Error::invalid(
                    "killed drifted BM ν is evaluated on intervals only",
                )),
            }
        };
        let density = move |s: &State| match *s {
            State::RealPos(x) => Some(2.0 * l * x * (-c * x).exp()),
            _ => None,
        };
        Ok(EigenData::new(
            l,
            Arc::new(move |s: &State| match *s {
                State::RealPos(x) => x * (c * x).exp() / norm,
                _ => 0.0,
            }),
            Arc::new(mass),
            Scaling::Power(-1.5),
        )
        .with_density(Arc::new(density)))
    }

    /// The h-transform is a Bessel(3) process.
    fn sample_tilted(&self, x: &State, t: f64, rng: &mut RandomStream) -> Option<State> {
        let State::RealPos(x) = *x else { return None };
        Some(State::real_pos(bessel3(x, t, rng)))
    }

    /// ln E_x[M_s^2] = c²s - 2 ln x + ln E[Y² (1 - e^{-2xY/s}); Y > 0] with
    /// Y ~ N(x + cs, s).
    fn log_martingale_second_moment(&self, x: &State, s: f64) -> Option<f64> {
        let State::RealPos(x) = *x else { return None };
        if s <= 0.0 {
            return Some(0.0);
        }
        let c = self.c;
        let sd = s.sqrt();
        let mean = x + c * s;
        let lo = (-mean / sd).max(-12.0);
        let hi = 12.0;
        if lo >= hi {
            return Some(f64::NEG_INFINITY);
        }
        let q = integrate(
            |v| {
                let y = mean + sd * v;
                if y <= 0.0 {
                    return 0.0;
                }
                let phi = (-0.5 * v * v).exp() / (2.0 * PI).sqrt();
                y * y * phi * -(-2.0 * x * y / s).exp_m1()
            },
            lo,
            hi,
            1e-300,
            1e-11,
        );
        Some(c * c * s - 2.0 * x.ln() + q.value.ln())
    }
}
