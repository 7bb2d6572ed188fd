//! `results.csv` and the `metadata.json` sidecar.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use serde_json::{json, Value};

use crate::config::ExperimentSpec;
use crate::experiments::Report;

pub const RESULTS_HEADER: &str = "time,estimator,value,std_error,n_effective,excluded_truncated";

/// Rows in insertion order; floats use the shortest round-trip form, so
/// identical estimates give identical bytes.
pub fn results_csv(report: &Report) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in &report.rows {
        let e = &r.estimate;
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.time, r.estimator, e.value, e.std_error, e.n_effective, e.excluded_truncated
        )
        .unwrap();
    }
    s
}

pub fn metadata(spec: &ExperimentSpec, report: &Report, wall_time_s: f64, threads: usize) -> Value {
    json!({
        "experiment": spec.kind.name(),
        "spec": spec.raw,
        "seed": spec.seed,
        "threads": threads,
        "wall_time_s": wall_time_s,
        "truncated_replicas": report.truncated_replicas,
        "diagnostics": report.diagnostics.iter().map(|d| json!({
            "name": d.name,
            "passed": d.passed,
            "detail": d.detail,
        })).collect::<Vec<_>>(),
        "notes": report.notes,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

pub fn write_all(
    dir: &Path,
    spec: &ExperimentSpec,
    report: &Report,
    wall_time_s: f64,
    threads: usize,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let write = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).with_context(|| format!("cannot write {}", p.display()))
    };
    write("results.csv", &results_csv(report))?;
    let meta = metadata(spec, report, wall_time_s, threads);
    write(
        "metadata.json",
        &(serde_json::to_string_pretty(&meta)? + "\n"),
    )?;
    for (name, body) in &report.files {
        write(name, body)?;
    }
    Ok(())
}
