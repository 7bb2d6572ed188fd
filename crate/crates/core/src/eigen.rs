//! Eigendata (lambda, h, nu, p) of a motion.
//!
//! `-lambda` is an eigenvalue of the generator with right eigenfunction `h`,
//! `nu` is the measure in the large-time asymptotics
//! `P_x(X_t in B) ~ h(x) p(t) e^{-lambda t} nu(B)`, and
//! `M_t = h(X_t) e^{lambda t} / h(x)` is a mean-one martingale.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::state::State;
use crate::test_set::TestSet;

pub type StateFn = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
pub type MassFn = Arc<dyn Fn(&TestSet) -> Result<f64> + Send + Sync>;
pub type DensityFn = Arc<dyn Fn(&State) -> Option<f64> + Send + Sync>;

/// Scaling function p(t) in the asymptotic formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scaling {
    /// p ≡ 1 (all lambda-positive motions).
    One,
    /// p(t) = t^exponent.
    Power(f64),
}

impl Scaling {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Scaling::One => 1.0,
            Scaling::Power(e) => t.powf(e),
        }
    }
}

#[derive(Clone)]
pub struct EigenData {
    lambda: f64,
    h: StateFn,
    nu_mass: MassFn,
    nu_density: Option<DensityFn>,
    p: Scaling,
    h_surrogate: bool,
}

impl EigenData {
    pub fn new(lambda: f64, h: StateFn, nu_mass: MassFn, p: Scaling) -> Self {
        EigenData {
            lambda,
            h,
            nu_mass,
            nu_density: None,
            p,
            h_surrogate: false,
        }
    }

    pub fn with_density(mut self, density: DensityFn) -> Self {
        self.nu_density = Some(density);
        self
    }

    /// Marks `h` as a stand-in that is only equivalent to the true
    /// eigenfunction up to bounded multiplicative constants.
    pub fn surrogate(mut self) -> Self {
        self.h_surrogate = true;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// h(x); zero on the absorbed state.
    pub fn h(&self, x: &State) -> f64 {
        if x.is_absorbed() {
            0.0
        } else {
            (self.h)(x)
        }
    }

    /// nu(B). A predicate with an explicit mass override uses that mass.
    pub fn nu_mass(&self, set: &TestSet) -> Result<f64> {
        if let TestSet::Predicate {
            nu_mass: Some(m), ..
        } = set
        {
            return Ok(*m);
        }
        (self.nu_mass)(set)
    }

    pub fn nu_density(&self, x: &State) -> Option<f64> {
        if x.is_absorbed() {
            return Some(0.0);
        }
        self.nu_density.as_ref().and_then(|d| d(x))
    }

    pub fn has_density(&self) -> bool {
        self.nu_density.is_some()
    }

    pub fn p(&self, t: f64) -> f64 {
        self.p.eval(t)
    }

    pub fn scaling(&self) -> Scaling {
        self.p
    }

    pub fn h_is_surrogate(&self) -> bool {
        self.h_surrogate
    }

    /// M_t = h(x_t) e^{lambda t} / h(x_0).
    pub fn martingale_weight(&self, x0: &State, xt: &State, t: f64) -> Result<f64> {
        martingale_weight(self, x0, xt, t)
    }
}

impl fmt::Debug for EigenData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EigenData")
            .field("lambda", &self.lambda)
            .field("p", &self.p)
            .field("has_density", &self.nu_density.is_some())
            .field("h_surrogate", &self.h_surrogate)
            .finish_non_exhaustive()
    }
}

/// Likelihood ratio of the Doob h-transform at time `t`:
/// `h(xt) e^{lambda t} / h(x0)`, and 0 when `xt` is absorbed.
pub fn martingale_weight(eigen: &EigenData, x0: &State, xt: &State, t: f64) -> Result<f64> {
    if x0.is_absorbed() {
        return Err(Error::invalid("initial state is absorbed"));
    }
    let h0 = eigen.h(x0);
    if !(h0 > 0.0) {
        return Err(Error::invalid(format!("h(x0) = {h0} must be positive")));
    }
    if xt.is_absorbed() {
        return Ok(0.0);
    }
    Ok(eigen.h(xt) / h0 * (eigen.lambda * t).exp())
}

/// Mass of an interval under a distribution function.
pub(crate) fn interval_mass(cdf: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (cdf(b) - cdf(a)).max(0.0)
}
