//! Experiment runners. Each produces rows for `results.csv`, diagnostics
//! checked under `--assert`, and free-form notes for the metadata sidecar.

use branchsim::fixed_point::{eta_curve, pgf_extinction, sigma_estimate, wilson};
use branchsim::spine::{many_to_one, many_to_two};
use branchsim::stats::{
    ks_distance, martingale_curve, max_h_statistic, min_h_statistic, min_phi_surrogate,
    phi_monte_carlo, phi_quadrature, quantile, Accumulator, PhiResult,
};
use branchsim::{
    run_replicas_map, BranchingLaw, Error, EstimateWithError, MotionModel, RandomStream, Result,
    SimulationConfig, State, TestSet,
};
use serde_json::{json, Value};

use crate::config::{ExperimentKind, ExperimentSpec};

/// Tolerance, in joint standard errors, of every Monte Carlo comparison.
pub const Z_TOLERANCE: f64 = 4.0;

/// Paths for Monte Carlo Φ when `paths` is not given.
const DEFAULT_PHI_PATHS: u64 = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub time: f64,
    pub estimator: String,
    pub estimate: EstimateWithError,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub rows: Vec<Row>,
    pub diagnostics: Vec<Diagnostic>,
    /// Extra CSV files written next to `results.csv`.
    pub files: Vec<(String, String)>,
    pub notes: serde_json::Map<String, Value>,
    /// Replicas dropped because they hit the population cap.
    pub truncated_replicas: u64,
}

impl Report {
    fn row(&mut self, time: f64, estimator: impl Into<String>, estimate: EstimateWithError) {
        self.rows.push(Row {
            time,
            estimator: estimator.into(),
            estimate,
        });
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.diagnostics.push(Diagnostic {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn note(&mut self, key: &str, value: Value) {
        self.notes.insert(key.to_string(), value);
    }

    pub fn all_passed(&self) -> bool {
        self.diagnostics.iter().all(|d| d.passed)
    }
}

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    match spec.kind {
        ExperimentKind::ManyToOneCheck => moment_check(spec, 1),
        ExperimentKind::ManyToTwoCheck => moment_check(spec, 2),
        ExperimentKind::MartingaleCurve => curve(spec),
        ExperimentKind::Phi => phi(spec),
        ExperimentKind::L2ThresholdScan => l2_scan(spec),
        ExperimentKind::QsdFit => qsd_fit(spec),
        ExperimentKind::EtaSigma => eta_sigma(spec),
        ExperimentKind::MinHDiagnostic => min_h(spec),
    }
}

fn sim_config(spec: &ExperimentSpec) -> SimulationConfig {
    SimulationConfig {
        horizon: spec.horizon,
        snapshot_times: spec.snapshot_times.clone(),
        population_cap: spec.population_cap,
        seed: spec.seed,
        replica_index: 0,
    }
}

/// Stream for spine estimators, disjoint from every engine replica.
fn spine_stream(seed: u64) -> RandomStream {
    RandomStream::for_replica(seed, u64::MAX)
}

/// Per snapshot time and set, engine estimates of E[ξ_t(B)^power]. Truncated
/// replicas are excluded.
pub fn engine_set_moments(
    motion: &MotionModel,
    law: &BranchingLaw,
    x0: &State,
    cfg: &SimulationConfig,
    replicas: u64,
    sets: &[&TestSet],
    power: i32,
) -> Result<(Vec<Vec<EstimateWithError>>, u64)> {
    let rows = run_replicas_map(motion, law, x0, cfg, replicas, |_, snaps| {
        snaps
            .iter()
            .map(|s| {
                (!s.truncated).then(|| {
                    sets.iter()
                        .map(|b| (b.count_in(&s.live_states) as f64).powi(power))
                        .collect::<Vec<_>>()
                })
            })
            .collect::<Vec<_>>()
    })?;
    let k = cfg.snapshot_times.len();
    let mut acc = vec![vec![Accumulator::default(); sets.len()]; k];
    let mut truncated = 0;
    for row in &rows {
        if row.iter().any(Option::is_none) {
            truncated += 1;
        }
        for (j, cell) in row.iter().enumerate() {
            match cell {
                Some(v) => acc[j].iter_mut().zip(v).for_each(|(a, x)| a.push(*x)),
                None => acc[j].iter_mut().for_each(Accumulator::exclude),
            }
        }
    }
    Ok((
        acc.iter()
            .map(|r| r.iter().map(Accumulator::estimate).collect())
            .collect(),
        truncated,
    ))
}

fn moment_check(spec: &ExperimentSpec, power: i32) -> Result<Report> {
    let mut rep = Report::default();
    let cfg = sim_config(spec);
    let sets: Vec<&TestSet> = spec.sets.iter().map(|(_, b)| b).collect();
    let (engine, truncated) = engine_set_moments(
        &spec.motion,
        &spec.law,
        &spec.x0,
        &cfg,
        spec.replicas,
        &sets,
        power,
    )?;
    rep.truncated_replicas = truncated;
    let mut rng = spine_stream(spec.seed);
    let (engine_name, spine_name) = if power == 1 {
        ("engine_mean", "many_to_one")
    } else {
        ("engine_second_moment", "many_to_two")
    };
    let mut heavy = Vec::new();
    for (j, &t) in spec.snapshot_times.iter().enumerate() {
        for (i, (label, b)) in spec.sets.iter().enumerate() {
            let f = |s: &State| b.indicator(s);
            let oracle = if power == 1 {
                many_to_one(
                    &spec.motion,
                    &spec.law,
                    &spec.x0,
                    &f,
                    t,
                    spec.paths,
                    &mut rng,
                )?
            } else {
                let e = many_to_two(
                    &spec.motion,
                    &spec.law,
                    &spec.x0,
                    &f,
                    &f,
                    t,
                    spec.paths,
                    &mut rng,
                )?;
                if e.heavy_tailed {
                    heavy.push(json!({ "time": t, "set": label, "weight_cv": e.weight_cv }));
                }
                e.estimate
            };
            let e = engine[j][i];
            rep.row(t, format!("{engine_name}[{label}]"), e);
            rep.row(t, format!("{spine_name}[{label}]"), oracle);
            let z = e.z_score(&oracle);
            rep.check(
                format!("{spine_name}[{label}] at t={t}"),
                z <= Z_TOLERANCE,
                format!("engine {e}, spine {oracle}, z = {z:.2}"),
            );
        }
    }
    if !heavy.is_empty() {
        rep.note("heavy_tailed_two_spine_weights", Value::Array(heavy));
    }
    Ok(rep)
}

fn curve(spec: &ExperimentSpec) -> Result<Report> {
    let mut rep = Report::default();
    let cfg = sim_config(spec);
    let c = martingale_curve(
        &spec.motion,
        &spec.law,
        &spec.x0,
        &cfg,
        spec.replicas,
        spec.surrogate,
    )?;
    let surrogate = spec.motion.eigen_data()?.h_is_surrogate();
    for (j, &t) in c.times.iter().enumerate() {
        rep.row(t, "mean_D", c.mean_d[j]);
        rep.row(t, "second_moment_D", c.second_moment_d[j]);
        rep.truncated_replicas = rep.truncated_replicas.max(c.mean_d[j].excluded_truncated);
        if !surrogate {
            let z = c.mean_d[j].z_score(&EstimateWithError::exact(1.0));
            rep.check(
                format!("mean_D at t={t}"),
                z <= Z_TOLERANCE,
                format!("{} vs 1, z = {z:.2}", c.mean_d[j]),
            );
        }
    }
    rep.note("surrogate_h", json!(surrogate));
    Ok(rep)
}

fn phi_for(spec: &ExperimentSpec, law: &BranchingLaw) -> Result<PhiResult> {
    match phi_quadrature(&spec.motion, law, &spec.x0, spec.t_max, spec.tol) {
        Err(Error::Unavailable(_)) => {
            let paths = if spec.paths > 0 {
                spec.paths
            } else {
                DEFAULT_PHI_PATHS
            };
            phi_monte_carlo(
                &spec.motion,
                law,
                &spec.x0,
                spec.t_max,
                spec.tol,
                paths,
                spec.seed,
            )
        }
        other => other,
    }
}

fn phi_note(phi: &PhiResult) -> Value {
    json!({
        "value": phi.value,
        "divergent": phi.divergent,
        "log_slope": phi.log_slope,
        "ambiguous": phi.ambiguous,
        "source": format!("{:?}", phi.source),
    })
}

fn phi(spec: &ExperimentSpec) -> Result<Report> {
    let mut rep = Report::default();
    let phi = phi_for(spec, &spec.law)?;
    rep.row(spec.t_max, "phi", EstimateWithError::exact(phi.value));
    rep.row(
        spec.t_max,
        "phi_log_slope",
        EstimateWithError::exact(phi.log_slope),
    );
    rep.note("phi", phi_note(&phi));
    if phi.ambiguous {
        log::warn!(
            "Φ classification is ambiguous (log-slope {:.2e})",
            phi.log_slope
        );
    }
    if spec.replicas > 0 && !spec.snapshot_times.is_empty() {
        let cfg = sim_config(spec);
        let c = martingale_curve(
            &spec.motion,
            &spec.law,
            &spec.x0,
            &cfg,
            spec.replicas,
            spec.surrogate,
        )?;
        let (t, e) = (*c.times.last().unwrap(), *c.second_moment_d.last().unwrap());
        rep.row(t, "second_moment_D", e);
        rep.truncated_replicas = e.excluded_truncated;
        if !phi.divergent {
            // E[D_t²] increases to Φ.
            let target = phi.value;
            let tol = (Z_TOLERANCE * e.std_error).max(0.05 * target);
            rep.check(
                format!("E[D_t^2] at t={t} vs phi"),
                (e.value - target).abs() <= tol,
                format!("{e} vs {target:.6}, tolerance {tol:.4}"),
            );
        }
    }
    Ok(rep)
}

/// Ratio r(m1 - 1)/λ at which Φ turns finite.
pub fn l2_threshold_ratio(motion: &MotionModel) -> f64 {
    match motion {
        MotionModel::KilledDriftBm(_) => 2.0,
        _ => 1.0,
    }
}

/// `law` with its rate rescaled so that r(m1 - 1) = ratio · λ.
pub fn law_at_ratio(law: &BranchingLaw, lambda: f64, ratio: f64) -> Result<BranchingLaw> {
    BranchingLaw::new(law.pmf().iter().copied(), ratio * lambda / (law.m1() - 1.0))
}

fn l2_scan(spec: &ExperimentSpec) -> Result<Report> {
    let mut rep = Report::default();
    let lambda = spec.motion.eigen_data()?.lambda();
    if !(lambda > 0.0) {
        return Err(Error::config("the L² scan needs a motion with λ > 0"));
    }
    let threshold = spec
        .threshold
        .unwrap_or_else(|| l2_threshold_ratio(&spec.motion));
    let cfg = sim_config(spec);
    let (first, last) = spec
        .compare_times
        .unwrap_or((spec.snapshot_times[0], *spec.snapshot_times.last().unwrap()));
    let idx = |t: f64| spec.snapshot_times.iter().position(|&s| s == t).unwrap();
    let mut notes = Vec::new();
    for &ratio in &spec.ratios {
        let law = law_at_ratio(&spec.law, lambda, ratio)?;
        let c = martingale_curve(
            &spec.motion,
            &law,
            &spec.x0,
            &cfg,
            spec.replicas,
            spec.surrogate,
        )?;
        for (j, &t) in c.times.iter().enumerate() {
            rep.row(
                t,
                format!("second_moment_D[ratio={ratio}]"),
                c.second_moment_d[j],
            );
            rep.truncated_replicas += c.second_moment_d[j].excluded_truncated;
        }
        let phi = phi_for(spec, &law)?;
        rep.row(
            spec.t_max,
            format!("phi[ratio={ratio}]"),
            EstimateWithError::exact(phi.value),
        );
        let growth = c.second_moment_d[idx(last)].value / c.second_moment_d[idx(first)].value;
        let below = ratio < threshold;
        if below {
            rep.check(
                format!("divergence signature at ratio {ratio}"),
                growth > 3.0,
                format!("E[D_{last}^2]/E[D_{first}^2] = {growth:.3}, needs > 3"),
            );
        } else {
            rep.check(
                format!("plateau at ratio {ratio}"),
                growth < 1.25,
                format!("E[D_{last}^2]/E[D_{first}^2] = {growth:.3}, needs < 1.25"),
            );
        }
        rep.check(
            format!("phi flag at ratio {ratio}"),
            phi.divergent == below,
            format!("divergent = {}, expected {below}", phi.divergent),
        );
        notes.push(json!({ "ratio": ratio, "growth": growth, "phi": phi_note(&phi) }));
    }
    rep.note("threshold_ratio", json!(threshold));
    rep.note("scan", Value::Array(notes));
    Ok(rep)
}

/// Distribution function of the normalized ν on scalar states.
pub fn nu_cdf(motion: &MotionModel) -> Result<impl Fn(f64) -> f64> {
    let eigen = motion.eigen_data()?;
    let discrete = matches!(
        motion,
        MotionModel::GaltonWatson(_) | MotionModel::ErgodicCtmc(_)
    );
    let lo = if discrete { -0.5 } else { f64::NEG_INFINITY };
    let total = eigen.nu_mass(&TestSet::interval(lo, f64::INFINITY)?)?;
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::config(format!(
            "ν has total mass {total} and cannot be normalized"
        )));
    }
    Ok(move |x: f64| {
        let b = if discrete { x.floor() + 0.5 } else { x };
        if b <= lo {
            return 0.0;
        }
        TestSet::interval(lo, b)
            .and_then(|set| eigen.nu_mass(&set))
            .map_or(f64::NAN, |m| m / total)
    })
}

fn qsd_fit(spec: &ExperimentSpec) -> Result<Report> {
    let mut rep = Report::default();
    if !matches!(
        spec.x0,
        State::Real(_) | State::RealPos(_) | State::Count(_) | State::Site(_)
    ) {
        return Err(Error::config("qsd-fit needs a motion with scalar states"));
    }
    let cdf = nu_cdf(&spec.motion)?;
    let cfg = sim_config(spec);
    let t = *spec.snapshot_times.last().unwrap();
    let per = run_replicas_map(
        &spec.motion,
        &spec.law,
        &spec.x0,
        &cfg,
        spec.replicas,
        |_, snaps| {
            let s = snaps.last().unwrap();
            if s.truncated {
                None
            } else {
                Some(
                    s.live_states
                        .iter()
                        .filter_map(State::scalar)
                        .collect::<Vec<_>>(),
                )
            }
        },
    )?;
    let mut samples = Vec::new();
    let mut csv = String::from("replica,value\n");
    let (mut survivors, mut truncated) = (0u64, 0u64);
    for (i, r) in per.iter().enumerate() {
        match r {
            None => truncated += 1,
            Some(v) if !v.is_empty() => {
                survivors += 1;
                for x in v {
                    csv.push_str(&format!("{i},{x}\n"));
                }
                samples.extend_from_slice(v);
            }
            Some(_) => {}
        }
    }
    rep.truncated_replicas = truncated;
    let ks = ks_distance(&samples, &cdf);
    rep.row(
        t,
        "ks_distance",
        EstimateWithError {
            n_effective: samples.len() as u64,
            ..EstimateWithError::exact(ks)
        },
    );
    let mut surv = wilson(survivors, spec.replicas - truncated);
    surv.excluded_truncated = truncated;
    rep.row(t, "survival", surv);
    rep.check(
        "surviving replicas",
        survivors >= spec.min_survivors,
        format!(
            "{survivors} surviving replicas, needs {}",
            spec.min_survivors
        ),
    );
    rep.check(
        format!("ks_distance at t={t}"),
        ks < spec.ks_tolerance,
        format!(
            "KS = {ks:.5} over {} particles, needs < {}",
            samples.len(),
            spec.ks_tolerance
        ),
    );
    rep.files.push(("samples.csv".into(), csv));
    Ok(rep)
}

fn eta_sigma(spec: &ExperimentSpec) -> Result<Report> {
    let mut rep = Report::default();
    let cfg = sim_config(spec);
    let eta = eta_curve(&spec.motion, &spec.law, &spec.x0, &cfg, spec.replicas)?;
    for (e, &t) in eta.iter().zip(&spec.snapshot_times) {
        rep.row(t, "eta", *e);
    }
    let t = spec.horizon;
    let s = sigma_estimate(
        &spec.motion,
        &spec.law,
        &spec.x0,
        t,
        spec.epsilon,
        spec.replicas,
        spec.seed,
    )?;
    rep.truncated_replicas = s.sigma.excluded_truncated;
    rep.row(t, "sigma", s.sigma);
    rep.row(t, "eta_paired", s.eta);
    for (eps, e) in &s.sweep {
        rep.row(t, format!("sigma[eps={eps}]"), *e);
    }
    if spec.motion.never_absorbs() {
        let q = pgf_extinction(&spec.law);
        rep.row(t, "pgf_extinction", EstimateWithError::exact(q));
        let last = eta.last().unwrap();
        let z = last.z_score(&EstimateWithError::exact(q));
        rep.check(
            "eta vs pgf fixed point",
            z <= Z_TOLERANCE,
            format!("{last} vs {q:.6}, z = {z:.2}"),
        );
    }
    let gap = (s.eta.value - s.sigma.value) / s.sigma.joint_se(&s.eta);
    rep.check(
        "sigma >= eta",
        gap <= Z_TOLERANCE,
        format!("sigma {} , eta {}", s.sigma, s.eta),
    );
    rep.note("epsilon_sensitive", json!(s.epsilon_sensitive));
    rep.note("phi_divergent", json!(s.phi_divergent));
    rep.note("sigma_eta_z", json!(s.sigma.z_score(&s.eta)));
    Ok(rep)
}

fn min_h(spec: &ExperimentSpec) -> Result<Report> {
    let mut rep = Report::default();
    let eigen = spec.motion.eigen_data()?;
    let cfg = sim_config(spec);
    let region = spec.region;
    let per = run_replicas_map(
        &spec.motion,
        &spec.law,
        &spec.x0,
        &cfg,
        spec.replicas,
        |_, snaps| {
            let truncated = snaps.iter().any(|s| s.truncated);
            let stats: Vec<Option<(f64, f64, f64)>> = snaps
                .iter()
                .map(|s| {
                    (!s.live_states.is_empty() && !s.truncated).then(|| {
                        (
                            max_h_statistic(s, &eigen),
                            min_h_statistic(s, &eigen),
                            min_phi_surrogate(s, &eigen),
                        )
                    })
                })
                .collect();
            let inside = region.map(|(a, b)| {
                snaps.iter().all(|s| {
                    s.live_states
                        .iter()
                        .all(|x| x.scalar().is_some_and(|v| v > a && v < b))
                })
            });
            (truncated, stats, inside)
        },
    )?;
    let q = spec.quantile;
    let pct = (q * 100.0).round();
    let mut max_q = Vec::new();
    for (j, &t) in spec.snapshot_times.iter().enumerate() {
        let live: Vec<(f64, f64, f64)> = per.iter().filter_map(|r| r.1[j]).collect();
        let col = |k: usize| -> Vec<f64> { live.iter().map(|v| [v.0, v.1, v.2][k]).collect() };
        let n = live.len() as u64;
        let tag = |name: &str| format!("{name}_q{pct}");
        let e = |v: f64| EstimateWithError {
            n_effective: n,
            ..EstimateWithError::exact(v)
        };
        let mq = quantile(&col(0), q);
        max_q.push(mq);
        rep.row(t, tag("max_h"), e(mq));
        rep.row(t, tag("min_h"), e(quantile(&col(1), q)));
        rep.row(
            t,
            format!("min_phi_surrogate_q{}", ((1.0 - q) * 100.0).round()),
            e(quantile(&col(2), 1.0 - q)),
        );
        rep.row(t, "survivors", e(n as f64));
    }
    rep.truncated_replicas = per.iter().filter(|r| r.0).count() as u64;
    let (first, last) = spec
        .compare_times
        .unwrap_or((spec.snapshot_times[0], *spec.snapshot_times.last().unwrap()));
    let idx = |t: f64| spec.snapshot_times.iter().position(|&s| s == t).unwrap();
    let (a, b) = (max_q[idx(first)], max_q[idx(last)]);
    rep.check(
        format!("max_h q{pct} non-decreasing from t={first} to t={last}"),
        b >= a,
        format!("{a:.6} -> {b:.6}"),
    );
    if let Some((lo, hi)) = region {
        let stayed = per.iter().filter(|r| r.2 == Some(true)).count() as u64;
        let p = wilson(stayed, spec.replicas);
        rep.row(spec.horizon, "stays_in_region", p);
        rep.check(
            format!("population stays in ({lo}, {hi})"),
            p.value >= spec.region_min,
            format!("{p}, needs >= {}", spec.region_min),
        );
    }
    Ok(rep)
}
