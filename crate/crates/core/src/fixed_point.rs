//! Extinction probabilities: the pgf fixed point for motions without
//! absorption, and Monte Carlo proxies for η(x) = P_x(extinction) and
//! σ(x) = P_x(D_∞ = 0).

use crate::engine::{run_replicas_map, SimulationConfig};
use crate::error::Result;
use crate::law::BranchingLaw;
use crate::motion::MotionModel;
use crate::state::State;
use crate::stats::{malthusian_d, phi_quadrature, EstimateWithError};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const EPSILON_SWEEP: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Smallest root of f(s) = s on [0, 1], f the offspring pgf.
pub fn pgf_extinction(law: &BranchingLaw) -> f64 {
    if law.m1() <= 1.0 {
        return 1.0;
    }
    if law.pgf(0.0) == 0.0 {
        return 0.0;
    }
    // f' is increasing with f'(1) = m1 > 1: locate the minimum of f(s) - s.
    let (mut lo, mut hi) = (0.0, 1.0);
    if law.pgf_derivative(0.0) < 1.0 {
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if law.pgf_derivative(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let s_star = hi;
    let (mut lo, mut hi) = (0.0, s_star);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if law.pgf(mid) - mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Proportion with a Wilson-score standard error: the half-width of the
/// z = 1 Wilson interval. `value` is the raw proportion.
pub fn wilson(successes: u64, n: u64) -> EstimateWithError {
    if n == 0 {
        return EstimateWithError {
            value: f64::NAN,
            std_error: f64::NAN,
            n_effective: 0,
            excluded_truncated: 0,
        };
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let half = (p * (1.0 - p) / nf + 0.25 / (nf * nf)).sqrt() / (1.0 + 1.0 / nf);
    EstimateWithError {
        value: p,
        std_error: half,
        n_effective: n,
        excluded_truncated: 0,
    }
}

/// P̂(|ξ_t| = 0) at every snapshot time. Truncated replicas count as
/// surviving.
pub fn eta_curve(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    cfg: &SimulationConfig,
    replicas: u64,
) -> Result<Vec<EstimateWithError>> {
    let rows = run_replicas_map(motion, law, x0, cfg, replicas, |_, snaps| {
        snaps.iter().map(|s| s.is_extinct()).collect::<Vec<_>>()
    })?;
    Ok((0..cfg.snapshot_times.len())
        .map(|j| wilson(rows.iter().filter(|r| r[j]).count() as u64, replicas))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaEstimate {
    /// P̂(D_T < ε) at the requested ε.
    pub sigma: EstimateWithError,
    /// P̂(|ξ_T| = 0) from the same replicas.
    pub eta: EstimateWithError,
    /// σ̂ at each ε of the sweep, in the order of [`EPSILON_SWEEP`].
    pub sweep: Vec<(f64, EstimateWithError)>,
    /// The sweep range exceeds two standard errors.
    pub epsilon_sensitive: bool,
    /// Φ_{x0} is known to be infinite, so D_T is not an L² proxy for D_∞.
    pub phi_divergent: bool,
}

/// Finite-horizon proxy for σ(x0): the proportion of replicas with
/// D_T < ε. Truncated replicas are excluded from σ̂.
pub fn sigma_estimate(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    horizon: f64,
    epsilon: f64,
    replicas: u64,
    seed: u64,
) -> Result<SigmaEstimate> {
    let eigen = motion.eigen_data()?;
    let phi_divergent = match phi_quadrature(motion, law, x0, 60.0_f64.max(10.0 * horizon), 1e-3) {
        Ok(phi) => phi.divergent,
        Err(_) => false,
    };
    if phi_divergent {
        log::warn!("Φ(x0) is infinite; σ̂ is not an L² estimate of P(D_∞ = 0)");
    }
    let cfg = SimulationConfig::at_times(vec![horizon], seed);
    let rows = run_replicas_map(motion, law, x0, &cfg, replicas, |_, snaps| {
        let s = &snaps[0];
        let d = if s.truncated {
            None
        } else {
            malthusian_d(s, &eigen, law, x0, true).ok()
        };
        (s.is_extinct(), d)
    })?;
    let kept: Vec<f64> = rows.iter().filter_map(|r| r.1).collect();
    let excluded = rows.len() as u64 - kept.len() as u64;
    let proportion = |eps: f64| {
        let mut e = wilson(
            kept.iter().filter(|&&d| d < eps).count() as u64,
            kept.len() as u64,
        );
        e.excluded_truncated = excluded;
        e
    };
    let sigma = proportion(epsilon);
    let sweep: Vec<(f64, EstimateWithError)> = EPSILON_SWEEP
        .iter()
        .map(|&eps| (eps, proportion(eps)))
        .collect();
    let values = sweep.iter().map(|s| s.1.value);
    let range =
        values.clone().fold(f64::NEG_INFINITY, f64::max) - values.fold(f64::INFINITY, f64::min);
    let epsilon_sensitive = range > 2.0 * sigma.std_error;
    if epsilon_sensitive {
        log::warn!("σ̂ moves by {range:.4} across the ε sweep (> 2 SE)");
    }
    let eta = wilson(rows.iter().filter(|r| r.0).count() as u64, replicas);
    Ok(SigmaEstimate {
        sigma,
        eta,
        sweep,
        epsilon_sensitive,
        phi_divergent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::ErgodicCtmc;

    #[test]
    fn pgf_roots() {
        let law = BranchingLaw::binary(0.2, 1.0).unwrap();
        assert!((pgf_extinction(&law) - 0.25).abs() < 1e-11);
        assert_eq!(
            pgf_extinction(&BranchingLaw::new([(2, 1.0)], 1.0).unwrap()),
            0.0
        );
        for p in [0.05, 0.3, 0.45] {
            let law = BranchingLaw::binary(p, 2.0).unwrap();
            assert!((pgf_extinction(&law) - p / (1.0 - p)).abs() < 1e-11);
        }
        let law = BranchingLaw::new([(0, 0.1), (1, 0.5), (3, 0.4)], 1.0).unwrap();
        let q = pgf_extinction(&law);
        assert!((law.pgf(q) - q).abs() < 1e-11 && q < 1.0);
        assert_eq!(
            pgf_extinction(&BranchingLaw::binary(0.6, 1.0).unwrap()),
            1.0
        );
    }

    #[test]
    fn wilson_is_positive_at_the_boundary() {
        let w = wilson(0, 1000);
        assert_eq!(w.value, 0.0);
        assert!(w.std_error > 0.0 && w.std_error < 1e-3);
    }

    #[test]
    fn pure_death_extinction_curve() {
        let law = BranchingLaw::new([(0, 1.0)], 1.5).unwrap();
        let m: MotionModel = ErgodicCtmc::default_five_state().into();
        let cfg = SimulationConfig::at_times(vec![0.2, 0.5, 1.0], 3);
        let eta = eta_curve(&m, &law, &State::Site(0), &cfg, 20_000).unwrap();
        for (e, &t) in eta.iter().zip(&cfg.snapshot_times) {
            let exact = 1.0 - (-1.5 * t).exp();
            assert!((e.value - exact).abs() < 4.0 * e.std_error, "t={t}: {e}");
        }
        assert!(eta.windows(2).all(|w| w[0].value <= w[1].value));
    }
}
