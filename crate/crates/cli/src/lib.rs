//! Command-line front end: experiment files, runners, output files and the
//! acceptance battery.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;

use std::time::Instant;

use config::ExperimentSpec;
use experiments::Report;

/// Runs `spec` on a pool of `threads` workers (all cores when `None`).
pub fn run_with_threads(
    spec: &ExperimentSpec,
    threads: Option<usize>,
) -> anyhow::Result<(Report, f64, usize)> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build()?;
    let start = Instant::now();
    let report = pool.install(|| experiments::run(spec))?;
    Ok((
        report,
        start.elapsed().as_secs_f64(),
        pool.current_num_threads(),
    ))
}
