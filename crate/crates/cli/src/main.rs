use std::path::PathBuf;
use std::process::ExitCode;

use branchsim::Error;
use branchsim_cli::verify::{self, Level};
use branchsim_cli::{config, output, run_with_threads};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIAGNOSTIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "branchsim",
    version,
    about = "Branching Markov process simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Simulate {
        spec: PathBuf,
        /// Override a key of the experiment file, e.g. `motion.lambda=0.5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads; all cores by default.
        #[arg(long, env = "BRANCHSIM_THREADS")]
        threads: Option<usize>,
        /// Output directory; defaults to `output` in the file, then `out/<kind>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 when a diagnostic fails.
        #[arg(long)]
        assert: bool,
    },
    /// Run the acceptance battery.
    Verify {
        #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
        level: LevelArg,
        /// Criteria to run, e.g. `--only 1,3`; all by default.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, env = "BRANCHSIM_THREADS")]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = match e.downcast_ref::<Error>() {
                Some(Error::Config(_)) => EXIT_CONFIG,
                _ => EXIT_OTHER,
            };
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate {
            spec,
            overrides,
            threads,
            out,
            assert,
        } => {
            let table = config::load(&spec, &overrides)?;
            let spec = config::validate(table)?;
            let threads = threads.or(spec.threads);
            let (report, wall, used) = run_with_threads(&spec, threads)?;
            let dir = out
                .or_else(|| spec.output.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out").join(spec.kind.name()));
            output::write_all(&dir, &spec, &report, wall, used)?;
            for d in &report.diagnostics {
                let tag = if d.passed { "ok  " } else { "FAIL" };
                eprintln!("{tag} {}: {}", d.name, d.detail);
            }
            if report.truncated_replicas > 0 {
                log::warn!(
                    "{} replicas hit the population cap",
                    report.truncated_replicas
                );
            }
            println!("{}", dir.join("results.csv").display());
            Ok(if assert && !report.all_passed() {
                EXIT_DIAGNOSTIC
            } else {
                0
            })
        }
        Command::Verify {
            level,
            only,
            threads,
        } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let ids: Vec<u8> = if only.is_empty() {
                verify::CRITERIA.iter().map(|c| c.0).collect()
            } else {
                only
            };
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(n) = threads {
                builder = builder.num_threads(n);
            }
            let pool = builder.build()?;
            let mut all = true;
            for id in ids {
                let r = pool.install(|| verify::run_criterion(id, level))?;
                for c in &r.checks {
                    let tag = if c.passed { "ok  " } else { "FAIL" };
                    println!("    {tag} {}: {}", c.name, c.detail);
                }
                println!("{}", r.summary_line());
                all &= r.passed();
            }
            Ok(if all { 0 } else { EXIT_DIAGNOSTIC })
        }
    }
}
