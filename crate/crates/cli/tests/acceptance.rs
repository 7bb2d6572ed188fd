//! Runs every acceptance criterion and prints one PASS/FAIL line for each.
//! `BRANCHSIM_LEVEL=quick` shrinks the sampling budget; the default is full.

use std::process::ExitCode;
use std::time::Instant;

use branchsim_cli::verify::{run_criterion, Level, CRITERIA};

fn main() -> ExitCode {
    let level = match std::env::var("BRANCHSIM_LEVEL").as_deref() {
        Ok("quick") => Level::Quick,
        _ => Level::Full,
    };
    let verbose = std::env::var_os("BRANCHSIM_VERBOSE").is_some();
    let mut failed = 0;
    for (id, title) in CRITERIA {
        let start = Instant::now();
        match run_criterion(id, level) {
            Ok(r) => {
                for c in r.checks.iter().filter(|c| verbose || !c.passed) {
                    println!(
                        "    {} {}: {}",
                        if c.passed { "ok  " } else { "FAIL" },
                        c.name,
                        c.detail
                    );
                }
                println!(
                    "{} [{:.1}s]",
                    r.summary_line(),
                    start.elapsed().as_secs_f64()
                );
                failed += usize::from(!r.passed());
            }
            Err(e) => {
                println!("criterion {id} FAIL: {title} (error: {e})");
                failed += 1;
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        CRITERIA.len() - failed,
        CRITERIA.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
