//! Experiment files.
//!
//! An experiment is a TOML document. Top-level keys select the experiment and
//! its sampling budget; `[motion]` and `[branching]` describe the model and
//! `[[sets]]` lists the test sets B. `--set key=value` overrides any key by
//! its dotted path, the value being parsed as a TOML value (bare words fall
//! back to strings). See the README for the full grammar.

use std::fmt;
use std::path::Path;

use anyhow::Context;
use branchsim::motion::{
    ContactProcess, ErgodicCtmc, GaltonWatson, KilledDriftBm, KilledOu, TransientOu,
};
use branchsim::{canonicalize, BranchingLaw, Error, MotionModel, State, TestSet};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ManyToOneCheck,
    ManyToTwoCheck,
    MartingaleCurve,
    Phi,
    L2ThresholdScan,
    QsdFit,
    EtaSigma,
    MinHDiagnostic,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::ManyToOneCheck,
        ExperimentKind::ManyToTwoCheck,
        ExperimentKind::MartingaleCurve,
        ExperimentKind::Phi,
        ExperimentKind::L2ThresholdScan,
        ExperimentKind::QsdFit,
        ExperimentKind::EtaSigma,
        ExperimentKind::MinHDiagnostic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::ManyToOneCheck => "many-to-one-check",
            ExperimentKind::ManyToTwoCheck => "many-to-two-check",
            ExperimentKind::MartingaleCurve => "martingale-curve",
            ExperimentKind::Phi => "phi",
            ExperimentKind::L2ThresholdScan => "l2-threshold-scan",
            ExperimentKind::QsdFit => "qsd-fit",
            ExperimentKind::EtaSigma => "eta-sigma",
            ExperimentKind::MinHDiagnostic => "min-h-diagnostic",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    fn needs_engine(&self) -> bool {
        !matches!(self, ExperimentKind::Phi)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The document as written, before validation.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSpec {
    pub kind: Option<String>,
    pub motion: Option<RawMotion>,
    pub branching: Option<RawBranching>,
    pub x0: Option<toml::Value>,
    pub horizon: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub replicas: Option<u64>,
    pub paths: Option<u64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub population_cap: Option<usize>,
    pub sets: Option<Vec<RawSet>>,
    pub epsilon: Option<f64>,
    pub t_max: Option<f64>,
    pub tol: Option<f64>,
    pub ratios: Option<Vec<f64>>,
    pub ks_tolerance: Option<f64>,
    pub min_survivors: Option<u64>,
    pub quantile: Option<f64>,
    pub compare_times: Option<Vec<f64>>,
    pub region: Option<Vec<f64>>,
    pub region_min: Option<f64>,
    pub threshold: Option<f64>,
    pub surrogate: Option<bool>,
    pub output: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMotion {
    pub kind: String,
    pub lambda: Option<f64>,
    pub sigma2: Option<f64>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub d: Option<usize>,
    pub rho: Option<Vec<(i64, f64)>>,
    #[serde(rename = "Q")]
    pub q: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBranching {
    pub offspring: Vec<(u32, f64)>,
    /// Branching rate r.
    pub rate: Option<f64>,
    /// Malthusian rate r(m1 - 1); sets r from the offspring mean.
    pub growth: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSet {
    pub name: Option<String>,
    pub interval: Option<(f64, f64)>,
    pub states: Option<Vec<toml::Value>>,
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub motion: MotionModel,
    pub law: BranchingLaw,
    pub x0: State,
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub replicas: u64,
    pub paths: u64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub population_cap: usize,
    pub sets: Vec<(String, TestSet)>,
    pub epsilon: f64,
    pub t_max: f64,
    pub tol: f64,
    pub ratios: Vec<f64>,
    pub ks_tolerance: f64,
    pub min_survivors: u64,
    pub quantile: f64,
    pub compare_times: Option<(f64, f64)>,
    pub region: Option<(f64, f64)>,
    /// Lower bound on the proportion of replicas staying in `region`.
    pub region_min: f64,
    /// L² threshold of r(m1 - 1)/λ for the scan; motion default when absent.
    pub threshold: Option<f64>,
    pub surrogate: bool,
    pub output: Option<String>,
    /// The merged document, echoed into the metadata sidecar.
    pub raw: toml::Table,
}

/// Reads `path` and applies `key=value` overrides.
pub fn load(path: &Path, overrides: &[String]) -> anyhow::Result<toml::Table> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok(table)
}

/// Sets the dotted key of `assignment` (`a.b=value`) in `table`.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), Error> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override `{assignment}` is not key=value")))?;
    let value = parse_value(value.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(s: &str) -> toml::Value {
    format!("v = {s}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

/// Validates `table`, listing every violation.
pub fn validate(table: toml::Table) -> Result<ExperimentSpec, Error> {
    let raw: RawSpec = toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
    let mut errs: Vec<String> = Vec::new();
    let mut push = |e: Error| match e {
        Error::Config(list) => errs.extend(list),
        other => errs.push(other.to_string()),
    };

    let kind = match raw.kind.as_deref() {
        Some(k) => ExperimentKind::parse(k).or_else(|| {
            push(Error::config(format!(
                "unknown experiment kind `{k}` (expected one of {})",
                ExperimentKind::ALL.map(|k| k.name()).join(", ")
            )));
            None
        }),
        None => {
            push(Error::config("`kind` is required"));
            None
        }
    };

    let motion = match &raw.motion {
        Some(m) => build_motion(m).map_err(&mut push).ok(),
        None => {
            push(Error::config("`[motion]` block is required"));
            None
        }
    };

    let law = match &raw.branching {
        Some(b) => build_law(b).map_err(&mut push).ok(),
        None => {
            push(Error::config("`[branching]` block is required"));
            None
        }
    };

    let x0 = match (&raw.x0, &motion) {
        (Some(v), Some(m)) => build_state(v, m).map_err(&mut push).ok(),
        (None, _) => {
            push(Error::config("`x0` is required"));
            None
        }
        _ => None,
    };

    let snapshot_times = raw.snapshot_times.clone().unwrap_or_default();
    let horizon = raw
        .horizon
        .or_else(|| snapshot_times.last().copied())
        .unwrap_or(f64::NAN);
    if let Some(k) = kind {
        if k.needs_engine() {
            if snapshot_times.is_empty() {
                push(Error::config("`snapshot_times` must not be empty"));
            }
            let cfg = branchsim::SimulationConfig {
                horizon,
                snapshot_times: snapshot_times.clone(),
                population_cap: raw
                    .population_cap
                    .unwrap_or(branchsim::engine::DEFAULT_POPULATION_CAP),
                seed: 0,
                replica_index: 0,
            };
            if !snapshot_times.is_empty() {
                if let Err(e) = cfg.validate() {
                    push(e);
                }
            }
            if raw.replicas.is_none_or(|n| n == 0) {
                push(Error::config("`replicas` must be positive"));
            }
        }
        if matches!(
            k,
            ExperimentKind::ManyToOneCheck | ExperimentKind::ManyToTwoCheck
        ) && raw.paths.is_none_or(|n| n == 0)
        {
            push(Error::config("`paths` must be positive"));
        }
        if matches!(
            k,
            ExperimentKind::ManyToOneCheck | ExperimentKind::ManyToTwoCheck
        ) && raw.sets.as_ref().is_none_or(Vec::is_empty)
        {
            push(Error::config("at least one `[[sets]]` entry is required"));
        }
        if k == ExperimentKind::L2ThresholdScan && raw.ratios.as_ref().is_none_or(Vec::is_empty) {
            push(Error::config(
                "`ratios` must list at least one r(m1-1)/λ value",
            ));
        }
    }

    let mut sets = Vec::new();
    if let (Some(list), Some(m)) = (&raw.sets, &motion) {
        for (i, s) in list.iter().enumerate() {
            match build_set(s, m) {
                Ok(set) => {
                    sets.push((s.name.clone().unwrap_or_else(|| format!("B{}", i + 1)), set))
                }
                Err(e) => push(e),
            }
        }
    }

    if let (Some(m), Some(l), Some(k)) = (&motion, &law, kind) {
        if k != ExperimentKind::L2ThresholdScan {
            if let Ok(e) = m.eigen_data() {
                if let Err(e) = l.check_supercritical(e.lambda()) {
                    push(e);
                }
            } else if let Err(e) = l.check_supercritical(0.0) {
                push(e);
            }
        }
        if k == ExperimentKind::ManyToTwoCheck {
            if let Err(e) = l.require_split() {
                push(e);
            }
        }
        let uses_d = matches!(
            k,
            ExperimentKind::MartingaleCurve
                | ExperimentKind::L2ThresholdScan
                | ExperimentKind::EtaSigma
                | ExperimentKind::MinHDiagnostic
        );
        if uses_d {
            match m.eigen_data() {
                Ok(e) if e.h_is_surrogate() && !raw.surrogate.unwrap_or(false) => {
                    push(Error::config(
                        "this motion only has a surrogate eigenfunction; set `surrogate = true`",
                    ))
                }
                Err(e) => push(Error::config(e.to_string())),
                _ => {}
            }
        }
    }

    let region = match raw.region.as_deref() {
        None => None,
        Some([a, b]) if a < b => Some((*a, *b)),
        Some(r) => {
            push(Error::config(format!(
                "`region` {r:?} must be [a, b] with a < b"
            )));
            None
        }
    };
    let compare_times = match raw.compare_times.as_deref() {
        None => None,
        Some([a, b]) if snapshot_times.contains(a) && snapshot_times.contains(b) => Some((*a, *b)),
        Some(c) => {
            push(Error::config(format!(
                "`compare_times` {c:?} must be two entries of `snapshot_times`"
            )));
            None
        }
    };
    let quantile = raw.quantile.unwrap_or(0.1);
    if !(0.0..=1.0).contains(&quantile) {
        push(Error::config(format!(
            "`quantile` {quantile} must lie in [0, 1]"
        )));
    }
    let epsilon = raw
        .epsilon
        .unwrap_or(branchsim::fixed_point::DEFAULT_EPSILON);
    if !(epsilon > 0.0) {
        push(Error::config(format!(
            "`epsilon` {epsilon} must be positive"
        )));
    }
    if raw.threads == Some(0) {
        push(Error::config("`threads` must be positive"));
    }

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let (kind, motion, law, x0) = (kind.unwrap(), motion.unwrap(), law.unwrap(), x0.unwrap());
    Ok(ExperimentSpec {
        kind,
        motion,
        law,
        x0,
        horizon,
        snapshot_times,
        replicas: raw.replicas.unwrap_or(0),
        paths: raw.paths.unwrap_or(0),
        seed: raw.seed.unwrap_or(DEFAULT_SEED),
        threads: raw.threads,
        population_cap: raw
            .population_cap
            .unwrap_or(branchsim::engine::DEFAULT_POPULATION_CAP),
        sets,
        epsilon,
        t_max: raw.t_max.unwrap_or(60.0),
        tol: raw.tol.unwrap_or(1e-3),
        ratios: raw.ratios.unwrap_or_default(),
        ks_tolerance: raw.ks_tolerance.unwrap_or(0.05),
        min_survivors: raw.min_survivors.unwrap_or(0),
        quantile,
        compare_times,
        region,
        region_min: raw.region_min.unwrap_or(0.3),
        threshold: raw.threshold,
        surrogate: raw.surrogate.unwrap_or(false),
        output: raw.output,
        raw: table,
    })
}

fn need<T: Copy>(v: Option<T>, motion: &str, key: &str) -> Result<T, Error> {
    v.ok_or_else(|| Error::config(format!("motion `{motion}` needs `{key}`")))
}

pub fn build_motion(m: &RawMotion) -> Result<MotionModel, Error> {
    let k = m.kind.as_str();
    Ok(match k {
        "ergodic-ctmc" => match &m.q {
            Some(q) => ErgodicCtmc::new(q.clone())?.into(),
            None => ErgodicCtmc::default_five_state().into(),
        },
        "galton-watson" => {
            let rho = m
                .rho
                .clone()
                .ok_or_else(|| Error::config("motion `galton-watson` needs `rho`"))?;
            GaltonWatson::new(rho)?.into()
        }
        "contact-process" => {
            ContactProcess::new(need(m.d, k, "d")?, need(m.gamma, k, "gamma")?, m.lambda)?.into()
        }
        "killed-ou" => KilledOu::new(need(m.lambda, k, "lambda")?)?.into(),
        "transient-ou" => {
            TransientOu::new(need(m.lambda, k, "lambda")?, m.sigma2.unwrap_or(1.0))?.into()
        }
        "killed-drift-bm" => KilledDriftBm::new(need(m.c, k, "c")?)?.into(),
        other => {
            return Err(Error::config(format!(
                "unknown motion kind `{other}` (expected ergodic-ctmc, galton-watson, \
                 contact-process, killed-ou, transient-ou or killed-drift-bm)"
            )))
        }
    })
}

pub fn build_law(b: &RawBranching) -> Result<BranchingLaw, Error> {
    let probe = BranchingLaw::new(b.offspring.iter().copied(), 1.0)?;
    let rate = match (b.rate, b.growth) {
        (Some(r), None) => r,
        (None, Some(g)) => {
            if probe.m1() <= 1.0 {
                return Err(Error::config("`growth` needs an offspring mean above 1"));
            }
            g / (probe.m1() - 1.0)
        }
        _ => {
            return Err(Error::config(
                "`[branching]` needs exactly one of `rate` and `growth`",
            ))
        }
    };
    BranchingLaw::new(b.offspring.iter().copied(), rate)
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

pub fn build_state(v: &toml::Value, motion: &MotionModel) -> Result<State, Error> {
    let bad = || Error::config(format!("`x0` = {v} is not a state of `{}`", motion.name()));
    let state = match motion {
        MotionModel::KilledOu(_) | MotionModel::KilledDriftBm(_) => {
            State::RealPos(as_f64(v).ok_or_else(bad)?)
        }
        MotionModel::TransientOu(_) => State::Real(as_f64(v).ok_or_else(bad)?),
        MotionModel::GaltonWatson(_) => {
            State::Count(v.as_integer().filter(|&n| n >= 0).ok_or_else(bad)? as u64)
        }
        MotionModel::ErgodicCtmc(_) => {
            State::Site(v.as_integer().filter(|&n| n >= 0).ok_or_else(bad)? as usize)
        }
        MotionModel::ContactProcess(cp) => {
            let sites = v
                .as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|s| {
                    s.as_array()
                        .and_then(|c| {
                            c.iter()
                                .map(|x| x.as_integer())
                                .collect::<Option<Vec<i64>>>()
                        })
                        .filter(|c| c.len() == cp.dim())
                })
                .collect::<Option<Vec<Vec<i64>>>>()
                .ok_or_else(bad)?;
            canonicalize(cp.dim(), &sites)
        }
    };
    motion
        .validate_state(&state)
        .map_err(|e| Error::config(format!("`x0`: {e}")))?;
    Ok(state)
}

fn build_set(s: &RawSet, motion: &MotionModel) -> Result<TestSet, Error> {
    match (&s.interval, &s.states) {
        (Some((a, b)), None) => {
            TestSet::interval(*a, *b).map_err(|e| Error::config(format!("set: {e}")))
        }
        (None, Some(list)) => list
            .iter()
            .map(|v| build_state(v, motion))
            .collect::<Result<Vec<_>, _>>()
            .map(TestSet::finite),
        _ => Err(Error::config(
            "each `[[sets]]` entry needs exactly one of `interval` and `states`",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(s: &str) -> toml::Table {
        s.parse().unwrap()
    }

    const BASE: &str = r#"
        kind = "martingale-curve"
        x0 = 1.0
        snapshot_times = [1.0, 2.0]
        replicas = 100
        [motion]
        kind = "killed-ou"
        lambda = 1.0
        [branching]
        offspring = [[0, 0.2], [2, 0.8]]
        growth = 2.0
    "#;

    #[test]
    fn valid_document() {
        let spec = validate(doc(BASE)).unwrap();
        assert_eq!(spec.kind, ExperimentKind::MartingaleCurve);
        assert!((spec.law.growth_rate() - 2.0).abs() < 1e-12);
        assert_eq!(spec.x0, State::RealPos(1.0));
        assert_eq!(spec.seed, DEFAULT_SEED);
    }

    #[test]
    fn overrides_use_dotted_paths() {
        let mut t = doc(BASE);
        apply_override(&mut t, "motion.lambda=0.5").unwrap();
        apply_override(&mut t, "snapshot_times=[0.5, 1.5]").unwrap();
        apply_override(&mut t, "kind=phi").unwrap();
        let spec = validate(t).unwrap();
        assert_eq!(spec.kind, ExperimentKind::Phi);
        assert_eq!(spec.snapshot_times, vec![0.5, 1.5]);
        let MotionModel::KilledOu(m) = &spec.motion else {
            panic!()
        };
        assert_eq!(m.lambda(), 0.5);
    }

    #[test]
    fn empty_snapshot_times_is_a_config_error() {
        let mut t = doc(BASE);
        apply_override(&mut t, "snapshot_times=[]").unwrap();
        assert!(matches!(validate(t), Err(Error::Config(_))));
    }

    #[test]
    fn every_violation_is_listed() {
        let mut t = doc(BASE);
        apply_override(&mut t, "replicas=0").unwrap();
        apply_override(&mut t, "motion.lambda=-1.0").unwrap();
        apply_override(&mut t, "branching.offspring=[[0, 0.5], [2, 0.6]]").unwrap();
        let Err(Error::Config(list)) = validate(t) else {
            panic!()
        };
        assert!(list.len() >= 3, "{list:?}");
    }

    #[test]
    fn subcritical_growth_is_rejected_against_lambda() {
        let mut t = doc(BASE);
        apply_override(&mut t, "branching.growth=0.5").unwrap();
        let Err(Error::Config(list)) = validate(t) else {
            panic!()
        };
        assert!(list.iter().any(|m| m.contains("lambda")), "{list:?}");
    }
}
