//! Repelling Ornstein–Uhlenbeck process dX = λX dt + σ dW on the real line.
//!
//! Nothing is absorbed, yet h(x) = √(β/π) e^{-βx²} with β = λ/σ² decays
//! along every path. ν is Lebesgue measure, so only bounded sets have finite
//! ν-mass.

use std::f64::consts::PI;
use std::sync::Arc;

use super::Motion;
use crate::eigen::{EigenData, Scaling};
use crate::error::{Error, Result, Violations};
use crate::rng::RandomStream;
use crate::state::State;
use crate::test_set::TestSet;

#[derive(Clone, Debug)]
pub struct TransientOu {
    lambda: f64,
    sigma2: f64,
}

impl TransientOu {
    pub fn new(lambda: f64, sigma2: f64) -> Result<Self> {
        let mut v = Violations::default();
        v.check(lambda.is_finite() && lambda > 0.0, || {
            format!("transient OU drift λ = {lambda} must be positive")
        });
        v.check(sigma2.is_finite() && sigma2 > 0.0, || {
            format!("transient OU dispersion σ² = {sigma2} must be positive")
        });
        v.into_result()?;
        Ok(TransientOu { lambda, sigma2 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn beta(&self) -> f64 {
        self.lambda / self.sigma2
    }

    /// Variance of X_t under P: σ²(e^{2λt} - 1)/(2λ).
    pub fn variance(&self, t: f64) -> f64 {
        self.sigma2 * (2.0 * self.lambda * t).exp_m1() / (2.0 * self.lambda)
    }

    /// Mean and variance of the h-transformed (mean-reverting) motion.
    pub fn tilted_moments(&self, x: f64, t: f64) -> (f64, f64) {
        let mean = x * (-self.lambda * t).exp();
        let var = -self.sigma2 * (-2.0 * self.lambda * t).exp_m1() / (2.0 * self.lambda);
        (mean, var)
    }

    /// Density of the h-transformed motion.
    pub fn tilted_density(&self, x: f64, y: f64, t: f64) -> f64 {
        let (m, v) = self.tilted_moments(x, t);
        (-(y - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt()
    }
}

impl Motion for TransientOu {
    fn name(&self) -> &'static str {
        "transient-ou"
    }

    fn is_jump_process(&self) -> bool {
        false
    }

    fn validate_state(&self, x: &State) -> Result<()> {
        match *x {
            State::Real(v) if v.is_finite() => Ok(()),
            _ => Err(Error::invalid(format!(
                "transient-ou needs a Real state, got {x:?}"
            ))),
        }
    }

    fn advance(&self, x: &State, dt: f64, rng: &mut RandomStream) -> State {
        let State::Real(x) = *x else {
            return x.clone();
        };
        if dt <= 0.0 {
            return State::Real(x);
        }
        let mean = x * (self.lambda * dt).exp();
        State::Real(mean + self.variance(dt).sqrt() * rng.standard_normal())
    }

    fn transition_density(&self, x: &State, y: &State, t: f64) -> Option<f64> {
        let (&State::Real(x), &State::Real(y)) = (x, y) else {
            return None;
        };
        let m = x * (self.lambda * t).exp();
        let v = self.variance(t);
        Some((-(y - m).powi(2) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
    }

    fn eigen_data(&self) -> Result<EigenData> {
        let beta = self.beta();
        let c = (beta / PI).sqrt();
        let mass = |set: &TestSet| -> Result<f64> {
            match *set {
                TestSet::Interval { a, b } if a.is_finite() && b.is_finite() => Ok(b - a),
                TestSet::Interval { a, b } => Err(Error::config(format!(
                    "Lebesgue ν of the unbounded set ({a}, {b}) is infinite"
                ))),
                _ => Err(Error::invalid(
                    "transient OU ν is evaluated on intervals only",
                )),
            }
        };
        Ok(EigenData::new(
            self.lambda,
            Arc::new(move |s: &State| match *s {
                State::Real(x) => c * (-beta * x * x).exp(),
                _ => 0.0,
            }),
            Arc::new(mass),
            Scaling::One,
        )
        .with_density(Arc::new(|s: &State| s.scalar().map(|_| 1.0))))
    }

    fn sample_tilted(&self, x: &State, t: f64, rng: &mut RandomStream) -> Option<State> {
        let State::Real(x) = *x else { return None };
        let (m, v) = self.tilted_moments(x, t);
        Some(State::Real(m + v.sqrt() * rng.standard_normal()))
    }

    /// With q = 2e^{2λs} - 1:
    /// ln E_x[M_s^2] = 2λs - ½ ln q - 2βx² e^{2λs}/q + 2βx².
    fn log_martingale_second_moment(&self, x: &State, s: f64) -> Option<f64> {
        let State::Real(x) = *x else { return None };
        let beta = self.beta();
        let g = (2.0 * self.lambda * s).exp();
        let q = 2.0 * g - 1.0;
        Some(2.0 * self.lambda * s - 0.5 * q.ln() - 2.0 * beta * x * x * (g / q - 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    #[test]
    fn h_is_an_eigenfunction() {
        let m = TransientOu::new(0.7, 1.8).unwrap();
        let e = m.eigen_data().unwrap();
        let h = |x: f64| e.h(&State::Real(x));
        let d = 1e-4;
        for &x in &[-1.0, 0.0, 0.3, 1.2] {
            let d1 = (h(x + d) - h(x - d)) / (2.0 * d);
            let d2 = (h(x + d) - 2.0 * h(x) + h(x - d)) / (d * d);
            let lh = 0.5 * m.sigma2() * d2 + m.lambda() * x * d1;
            assert!((lh + m.lambda() * h(x)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn nu_refuses_unbounded_sets() {
        let e = TransientOu::new(0.5, 1.0).unwrap().eigen_data().unwrap();
        let unbounded = TestSet::interval(0.0, f64::INFINITY).unwrap();
        assert!(matches!(e.nu_mass(&unbounded), Err(Error::Config(_))));
        assert_eq!(
            e.nu_mass(&TestSet::interval(-1.0, 1.0).unwrap()).unwrap(),
            2.0
        );
    }

    #[test]
    fn tilted_density_is_the_weighted_density() {
        // h(y) e^{λt} f_t(x, y) / h(x) is the h-transform density.
        let m = TransientOu::new(0.5, 2.0).unwrap();
        let e = m.eigen_data().unwrap();
        let (x, t) = (1.5, 0.8f64);
        for &y in &[-1.0, 0.0, 0.7, 2.0] {
            let w = e.h(&State::Real(y)) * (0.5 * t).exp() / e.h(&State::Real(x));
            let lhs = w * m
                .transition_density(&State::Real(x), &State::Real(y), t)
                .unwrap();
            let rhs = m.tilted_density(x, y, t);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1e-300), "y={y}");
        }
    }

    #[test]
    fn second_moment_matches_quadrature() {
        let m = TransientOu::new(0.5, 1.0).unwrap();
        let e = m.eigen_data().unwrap();
        for &(x, s) in &[(0.0f64, 1.0f64), (1.0, 0.5), (2.0, 3.0)] {
            let xs = State::Real(x);
            let mean = x * (0.5 * s).exp();
            let sd = m.variance(s).sqrt();
            let q = integrate(
                |y| {
                    let ys = State::Real(y);
                    m.transition_density(&xs, &ys, s).unwrap() * e.h(&ys).powi(2)
                },
                mean - 12.0 * sd,
                mean + 12.0 * sd,
                1e-300,
                1e-12,
            )
            .value;
            let oracle = q * s.exp() / e.h(&xs).powi(2);
            let got = m.log_martingale_second_moment(&xs, s).unwrap().exp();
            assert!((got - oracle).abs() < 1e-8 * oracle, "{got} {oracle}");
        }
    }

    #[test]
    fn sampler_moments_match_sde_solution() {
        let m = TransientOu::new(0.5, 1.0).unwrap();
        let mut rng = RandomStream::new(21);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let State::Real(y) = m.advance(&State::Real(0.0), 1.0, &mut rng) else {
                panic!()
            };
            s1 += y;
            s2 += y * y;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        let v = (1.0f64).exp_m1();
        assert!(mean.abs() < 4.0 * (v / n as f64).sqrt());
        assert!((var - v).abs() < 4.0 * v * (2.0 / n as f64).sqrt());
    }
}
