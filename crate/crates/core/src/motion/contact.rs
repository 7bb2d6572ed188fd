//! Subcritical contact process on Z^d observed modulo translations.
//!
//! Infected sites recover at rate 1; an empty site with k infected nearest
//! neighbours becomes infected at rate γk. The eigenfunction is not known in
//! closed form; h(ζ) is comparable to |ζ| up to constants, so |ζ| is exposed
//! as a surrogate.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{gillespie, Motion};
use crate::eigen::{EigenData, Scaling};
use crate::error::{Error, Result, Violations};
use crate::rng::RandomStream;
use crate::state::{canonicalize, LatticeConfig, State};
use crate::test_set::TestSet;

#[derive(Clone, Debug)]
pub struct ContactProcess {
    dim: usize,
    gamma: f64,
    lambda: Option<f64>,
}

impl ContactProcess {
    /// `gamma` is trusted to be subcritical. `lambda`, when supplied, is the
    /// decay rate of the survival probability and must lie in (0, 1].
    pub fn new(dim: usize, gamma: f64, lambda: Option<f64>) -> Result<Self> {
        let mut v = Violations::default();
        v.check(dim >= 1, || "lattice dimension must be at least 1".into());
        v.check(gamma.is_finite() && gamma > 0.0, || {
            format!("infection rate γ = {gamma} must be positive")
        });
        if let Some(l) = lambda {
            v.check(l > 0.0 && l <= 1.0, || {
                format!("λ = {l} must lie in (0, 1]")
            });
        }
        v.into_result()?;
        Ok(ContactProcess { dim, gamma, lambda })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The configuration {0}.
    pub fn single_site(&self) -> State {
        canonicalize(self.dim, &[vec![0; self.dim]])
    }
}

/// All recoveries (rate 1 each) and infections (rate γ times the number of
/// infected neighbours) out of `config`, with canonical targets. Infections
/// leading to the same class are listed separately.
pub fn contact_event_rates(config: &LatticeConfig, gamma: f64) -> Vec<(State, f64)> {
    let dim = config.dim();
    let sites = config.sites();
    let mut out = Vec::with_capacity(sites.len() * (1 + 2 * dim));
    for i in 0..sites.len() {
        let rest: Vec<Vec<i64>> = sites
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, s)| s.clone())
            .collect();
        out.push((canonicalize(dim, &rest), 1.0));
    }
    let mut boundary: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for s in sites {
        for axis in 0..dim {
            for delta in [-1, 1] {
                let mut y = s.clone();
                y[axis] += delta;
                if !config.contains(&y) {
                    *boundary.entry(y).or_default() += 1;
                }
            }
        }
    }
    for (y, k) in boundary {
        let mut grown = sites.to_vec();
        grown.push(y);
        out.push((canonicalize(dim, &grown), gamma * k as f64));
    }
    out
}

impl Motion for ContactProcess {
    fn name(&self) -> &'static str {
        "contact-process"
    }

    fn is_jump_process(&self) -> bool {
        true
    }

    fn validate_state(&self, x: &State) -> Result<()> {
        match x {
            State::Lattice(c) if c.dim() == self.dim && !c.is_empty() => Ok(()),
            _ => Err(Error::invalid(format!(
                "contact-process needs a non-empty Lattice state in dimension {}, got {x:?}",
                self.dim
            ))),
        }
    }

    fn advance(&self, x: &State, dt: f64, rng: &mut RandomStream) -> State {
        gillespie(x, dt, rng, |s| match s {
            State::Lattice(c) => contact_event_rates(c, self.gamma),
            _ => Vec::new(),
        })
    }

    fn jump_rates(&self, x: &State) -> Option<Vec<(State, f64)>> {
        match x {
            State::Lattice(c) => Some(contact_event_rates(c, self.gamma)),
            _ => Some(Vec::new()),
        }
    }

    /// Surrogate eigendata: ĥ(ζ) = |ζ| and a user-supplied λ; ν is unknown.
    fn eigen_data(&self) -> Result<EigenData> {
        let lambda = self.lambda.ok_or_else(|| {
            Error::Unavailable("λ of the contact process (supply `lambda`)".into())
        })?;
        let h = |s: &State| match s {
            State::Lattice(c) => c.len() as f64,
            _ => 0.0,
        };
        let mass = |_: &TestSet| -> Result<f64> {
            Err(Error::Unavailable("ν of the contact process".into()))
        };
        Ok(EigenData::new(lambda, Arc::new(h), Arc::new(mass), Scaling::One).surrogate())
    }
}
