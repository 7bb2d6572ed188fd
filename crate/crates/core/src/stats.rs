//! Estimators built from population snapshots: the Malthusian martingale,
//! mean-normalized and empirical ratios, Φ, goodness of fit and the
//! strong-supercriticality statistics.

use std::fmt;

use crate::eigen::EigenData;
use crate::engine::{run_replicas_map, PopulationSnapshot, SimulationConfig};
use crate::error::{Error, Result};
use crate::law::BranchingLaw;
use crate::motion::MotionModel;
use crate::quad::integrate;
use crate::rng::RandomStream;
use crate::state::State;
use crate::test_set::TestSet;

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateWithError {
    pub value: f64,
    pub std_error: f64,
    /// Replicas or paths that entered the estimate.
    pub n_effective: u64,
    /// Replicas dropped because they hit the population cap.
    pub excluded_truncated: u64,
}

impl EstimateWithError {
    pub fn exact(value: f64) -> Self {
        EstimateWithError {
            value,
            std_error: 0.0,
            n_effective: 0,
            excluded_truncated: 0,
        }
    }

    /// Sample mean and its standard error.
    pub fn from_samples(xs: &[f64]) -> Self {
        let mut acc = Accumulator::default();
        xs.iter().for_each(|&x| acc.push(x));
        acc.estimate()
    }

    pub fn scaled(self, k: f64) -> Self {
        EstimateWithError {
            value: self.value * k,
            std_error: self.std_error * k.abs(),
            ..self
        }
    }

    /// Standard error of the difference of two independent estimates.
    pub fn joint_se(&self, other: &EstimateWithError) -> f64 {
        self.std_error.hypot(other.std_error)
    }

    /// |self - other| in units of the joint standard error.
    pub fn z_score(&self, other: &EstimateWithError) -> f64 {
        let se = self.joint_se(other);
        let d = (self.value - other.value).abs();
        if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl fmt::Display for EstimateWithError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6} ± {:.6} (n = {})",
            self.value, self.std_error, self.n_effective
        )
    }
}

/// Running sums for a mean and its standard error, fed in a fixed order.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    n: u64,
    sum: f64,
    sum_sq: f64,
    excluded: u64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn exclude(&mut self) {
        self.excluded += 1;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.excluded += other.excluded;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// (Σw)² / Σw² when the pushed values are importance weights.
    pub fn effective_sample_size(&self) -> f64 {
        if self.sum_sq > 0.0 {
            self.sum * self.sum / self.sum_sq
        } else {
            0.0
        }
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn estimate(&self) -> EstimateWithError {
        let n = self.n as f64;
        let mean = self.mean();
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        EstimateWithError {
            value: mean,
            std_error: if self.n > 0 {
                (var / n).sqrt()
            } else {
                f64::NAN
            },
            n_effective: self.n,
            excluded_truncated: self.excluded,
        }
    }
}

/// E[D_t] and E[D_t^2] along snapshot times.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleCurve {
    pub times: Vec<f64>,
    pub mean_d: Vec<EstimateWithError>,
    pub second_moment_d: Vec<EstimateWithError>,
}

/// D_t = Σ h(u_t) e^{-(r(m1 - 1) - λ)t} / h(x0) over live particles.
///
/// Surrogate eigenfunctions are refused unless `allow_surrogate` is set.
pub fn malthusian_d(
    snapshot: &PopulationSnapshot,
    eigen: &EigenData,
    law: &BranchingLaw,
    x0: &State,
    allow_surrogate: bool,
) -> Result<f64> {
    if eigen.h_is_surrogate() && !allow_surrogate {
        return Err(Error::invalid(
            "D_t with a surrogate eigenfunction needs surrogate mode enabled",
        ));
    }
    let h0 = eigen.h(x0);
    if !(h0 > 0.0) {
        return Err(Error::invalid(format!("h(x0) = {h0} must be positive")));
    }
    let sum: f64 = snapshot.live_states.iter().map(|s| eigen.h(s)).sum();
    let decay = (-(law.growth_rate() - eigen.lambda()) * snapshot.time).exp();
    Ok(sum * decay / h0)
}

/// W_t(B, B') = ξ_t(B) / E[ξ_t(B')].
pub fn w_ratio(snapshot: &PopulationSnapshot, b: &TestSet, mean_denominator: f64) -> Result<f64> {
    if !(mean_denominator > 0.0) {
        return Err(Error::invalid(format!(
            "mean denominator {mean_denominator} must be positive"
        )));
    }
    Ok(b.count_in(&snapshot.live_states) as f64 / mean_denominator)
}

/// ν_t(B, B') = ξ_t(B) / ξ_t(B'), absent when ξ_t(B') = 0.
pub fn nu_ratio(snapshot: &PopulationSnapshot, b: &TestSet, bp: &TestSet) -> Option<f64> {
    let den = bp.count_in(&snapshot.live_states);
    (den > 0).then(|| b.count_in(&snapshot.live_states) as f64 / den as f64)
}

/// Engine estimate of E[D_t] and E[D_t^2] at every snapshot time.
/// Truncated replicas are excluded.
pub fn martingale_curve(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    cfg: &SimulationConfig,
    replicas: u64,
    allow_surrogate: bool,
) -> Result<MartingaleCurve> {
    let eigen = motion.eigen_data()?;
    if eigen.h_is_surrogate() && !allow_surrogate {
        return Err(Error::invalid(
            "D_t with a surrogate eigenfunction needs surrogate mode enabled",
        ));
    }
    let per_replica = run_replicas_map(motion, law, x0, cfg, replicas, |_, snaps| {
        snaps
            .iter()
            .map(|s| {
                if s.truncated {
                    None
                } else {
                    malthusian_d(s, &eigen, law, x0, true).ok()
                }
            })
            .collect::<Vec<_>>()
    })?;
    let k = cfg.snapshot_times.len();
    let mut first = vec![Accumulator::default(); k];
    let mut second = vec![Accumulator::default(); k];
    for row in &per_replica {
        for (j, d) in row.iter().enumerate() {
            match d {
                Some(d) => {
                    first[j].push(*d);
                    second[j].push(d * d);
                }
                None => {
                    first[j].exclude();
                    second[j].exclude();
                }
            }
        }
    }
    Ok(MartingaleCurve {
        times: cfg.snapshot_times.clone(),
        mean_d: first.iter().map(Accumulator::estimate).collect(),
        second_moment_d: second.iter().map(Accumulator::estimate).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiSource {
    /// Quadrature of a closed-form or density-based E_x[M_s^2].
    Quadrature,
    /// Monte Carlo estimate of E_x[M_s^2] on a time grid.
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiResult {
    /// Φ_x, or +inf when the integrand does not decay.
    pub value: f64,
    pub divergent: bool,
    /// Slope of ln(E[M_s^2] e^{-r(m1-1)s}) over the last decade of [0, t_max].
    pub log_slope: f64,
    /// The slope lies within the tolerance of 0, so the classification is
    /// not reliable.
    pub ambiguous: bool,
    pub source: PhiSource,
}

/// Φ_x = (m2 - m1) r ∫_0^∞ E_x[M_s^2] e^{-r(m1-1)s} ds.
///
/// The integral over [0, t_max] is computed by adaptive quadrature and the
/// tail beyond t_max is extrapolated exponentially from the log-slope of the
/// integrand over [t_max/10, t_max]; a non-negative slope flags divergence.
pub fn phi_quadrature(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    t_max: f64,
    tol: f64,
) -> Result<PhiResult> {
    if !(t_max > 0.0) {
        return Err(Error::invalid(format!("t_max = {t_max} must be positive")));
    }
    motion.validate_state(x0)?;
    if motion.log_martingale_second_moment(x0, t_max).is_none() {
        return Err(Error::Unavailable(
            "closed-form E[M_s^2] (use phi_monte_carlo)".into(),
        ));
    }
    let a = law.growth_rate();
    let log_g = |s: f64| {
        motion
            .log_martingale_second_moment(x0, s)
            .expect("checked above")
            - a * s
    };
    phi_from_log_integrand(law, log_g, t_max, tol, PhiSource::Quadrature)
}

fn phi_from_log_integrand(
    law: &BranchingLaw,
    log_g: impl Fn(f64) -> f64,
    t_max: f64,
    tol: f64,
    source: PhiSource,
) -> Result<PhiResult> {
    let k = law.split_rate();
    let slope = (log_g(t_max) - log_g(t_max / 10.0)) / (0.9 * t_max);
    let ambiguous = slope.abs() <= tol;
    if slope >= 0.0 {
        return Ok(PhiResult {
            value: f64::INFINITY,
            divergent: true,
            log_slope: slope,
            ambiguous,
            source,
        });
    }
    let mut breaks = vec![0.0, 0.01, 0.1, 0.5];
    let mut b = 1.0;
    while b < t_max {
        breaks.push(b);
        b += if b < 20.0 { 1.0 } else { 10.0 };
    }
    breaks.push(t_max);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let q = integrate(|s| log_g(s).exp(), w[0], w[1], 1e-300, 1e-10);
        total += q.value;
        // The integrand is eventually log-linear with negative slope.
        if w[1] >= 20.0 && log_g(w[1]).exp() * (t_max - w[1]) < 1e-15 * total {
            break;
        }
    }
    let tail = log_g(t_max).exp() / -slope;
    Ok(PhiResult {
        value: k * (total + tail),
        divergent: false,
        log_slope: slope,
        ambiguous,
        source,
    })
}

/// Φ_x from a Monte Carlo estimate of E_x[M_s^2] on a uniform grid, for
/// motions without a closed form. Uses the motion's eigendata, which may be
/// a surrogate.
pub fn phi_monte_carlo(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    t_max: f64,
    tol: f64,
    paths: u64,
    seed: u64,
) -> Result<PhiResult> {
    use rayon::prelude::*;
    motion.validate_state(x0)?;
    let eigen = motion.eigen_data()?;
    let grid: Vec<f64> = (0..=100).map(|i| t_max * i as f64 / 100.0).collect();
    let rows: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomStream::for_replica(seed, i);
            let mut x = x0.clone();
            let mut row = Vec::with_capacity(grid.len());
            row.push(1.0);
            for w in grid.windows(2) {
                x = motion.advance(&x, w[1] - w[0], &mut rng);
                let m = eigen.martingale_weight(x0, &x, w[1]).unwrap_or(0.0);
                row.push(m * m);
            }
            row
        })
        .collect();
    let mut means = vec![0.0; grid.len()];
    for row in &rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let a = law.growth_rate();
    let log_g: Vec<f64> = means
        .iter()
        .zip(&grid)
        .map(|(m, s)| (m / paths as f64).ln() - a * s)
        .collect();
    let interp = |s: f64| {
        let pos = (s / t_max * 100.0).clamp(0.0, 100.0);
        let i = (pos.floor() as usize).min(99);
        let f = pos - i as f64;
        log_g[i] * (1.0 - f) + log_g[i + 1] * f
    };
    phi_from_log_integrand(law, interp, t_max, tol, PhiSource::MonteCarlo)
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// the distribution function `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// min over live particles of h(u_t); +inf for an extinct population.
pub fn min_h_statistic(snapshot: &PopulationSnapshot, eigen: &EigenData) -> f64 {
    snapshot
        .live_states
        .iter()
        .map(|s| eigen.h(s))
        .fold(f64::INFINITY, f64::min)
}

/// max over live particles of h(u_t); 0 for an extinct population.
pub fn max_h_statistic(snapshot: &PopulationSnapshot, eigen: &EigenData) -> f64 {
    snapshot
        .live_states
        .iter()
        .map(|s| eigen.h(s))
        .fold(0.0, f64::max)
}

/// Monotone proxy for min_u Φ_{u_t} in the killed diffusions, where Φ_x is
/// decreasing in h(x): 1 / max_u h(u_t), +inf for an extinct population.
pub fn min_phi_surrogate(snapshot: &PopulationSnapshot, eigen: &EigenData) -> f64 {
    1.0 / max_h_statistic(snapshot, eigen)
}

/// Empirical `q`-quantile (type 7, linear interpolation).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + f * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}
