//! Ornstein–Uhlenbeck process dX = -λX dt + dW killed at 0.
//!
//! With τ(t) = (e^{2λt} - 1)/(2λ), X_t = e^{-λt} B_{τ(t)} for a Brownian
//! motion B started at x, and X is absorbed when B hits 0 before τ(t).

use std::f64::consts::PI;
use std::sync::Arc;

use statrs::function::erf::erf;

use super::{bessel3, bridge_survives, require_real_pos, Motion};
use crate::eigen::{interval_mass, EigenData, Scaling};
use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::state::State;
use crate::test_set::TestSet;

#[derive(Clone, Debug)]
pub struct KilledOu {
    lambda: f64,
}

impl KilledOu {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::config(format!(
                "killed OU drift λ = {lambda} must be positive"
            )));
        }
        Ok(KilledOu { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Brownian clock τ(t).
    pub fn tau(&self, t: f64) -> f64 {
        (2.0 * self.lambda * t).exp_m1() / (2.0 * self.lambda)
    }

    /// P_x(X_t > 0).
    pub fn survival(&self, x: f64, t: f64) -> f64 {
        erf(x / (2.0 * self.tau(t)).sqrt())
    }

    /// Distribution function of ν: 1 - e^{-λx²}.
    pub fn nu_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-self.lambda * x * x).exp_m1()
        }
    }
}

fn normal_pdf(z: f64, var: f64) -> f64 {
    (-z * z / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

impl Motion for KilledOu {
    fn name(&self) -> &'static str {
        "killed-ou"
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
        let tau = self.tau(dt);
        let z = x + tau.sqrt() * rng.standard_normal();
        if bridge_survives(x, z, tau, rng) {
            State::real_pos((-self.lambda * dt).exp() * z)
        } else {
            State::Absorbed
        }
    }

    fn transition_density(&self, x: &State, y: &State, t: f64) -> Option<f64> {
        let (&State::RealPos(x), &State::RealPos(y)) = (x, y) else {
            return None;
        };
        let tau = self.tau(t);
        let g = (self.lambda * t).exp();
        let z = g * y;
        Some(g * (normal_pdf(z - x, tau) - normal_pdf(z + x, tau)).max(0.0))
    }

    fn eigen_data(&self) -> Result<EigenData> {
        let l = self.lambda;
        let c = (4.0 * l / PI).sqrt();
        let me = self.clone();
        let mass = move |set: &TestSet| -> Result<f64> {
            match *set {
                TestSet::Interval { a, b } => Ok(interval_mass(|x| me.nu_cdf(x), a, b)),
                _ => Err(Error::invalid("killed OU ν is evaluated on intervals only")),
            }
        };
        let density = move |s: &State| match *s {
            State::RealPos(x) => Some(2.0 * l * x * (-l * x * x).exp()),
            _ => None,
        };
        Ok(EigenData::new(
            l,
            Arc::new(move |s: &State| match *s {
                State::RealPos(x) => c * x,
                _ => 0.0,
            }),
            Arc::new(mass),
            Scaling::One,
        )
        .with_density(Arc::new(density)))
    }

    /// The h-transform is a time-changed Bessel(3): e^{-λt} BES3(τ(t)).
    fn sample_tilted(&self, x: &State, t: f64, rng: &mut RandomStream) -> Option<State> {
        let State::RealPos(x) = *x else { return None };
        Some(State::real_pos(
            (-self.lambda * t).exp() * bessel3(x, self.tau(t), rng),
        ))
    }

    /// E_x[M_s^2] = E[Z^2; Z > 0 before τ] / x² for Brownian Z from x at time τ(s),
    /// i.e. [(x² + τ) erf(x/√(2τ)) + 2x√τ φ(x/√τ)] / x².
    fn log_martingale_second_moment(&self, x: &State, s: f64) -> Option<f64> {
        let State::RealPos(x) = *x else { return None };
        if s <= 0.0 {
            return Some(0.0);
        }
        let tau = self.tau(s);
        let a = x / tau.sqrt();
        let phi = (-0.5 * a * a).exp() / (2.0 * PI).sqrt();
        let m = (x * x + tau) * erf(a / std::f64::consts::SQRT_2) + 2.0 * x * tau.sqrt() * phi;
        Some(m.ln() - 2.0 * x.ln())
    }
}
