use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const KILLED_OU_CURVE: &str = r#"
kind = "martingale-curve"
x0 = 1.0
snapshot_times = [0.5, 1.0]
replicas = 300
[motion]
kind = "killed-ou"
lambda = 1.0
[branching]
offspring = [[0, 0.2], [2, 0.8]]
growth = 2.0
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("branchsim-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("spec.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn branchsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_branchsim"))
        .args(args)
        .env_remove("BRANCHSIM_THREADS")
        .output()
        .unwrap()
}

fn simulate(spec: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        spec.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    branchsim(&args)
}

#[test]
fn simulate_writes_results_and_metadata() {
    let dir = scratch("outputs");
    let spec = write_spec(&dir, KILLED_OU_CURVE);
    let out = dir.join("out");
    let o = simulate(&spec, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time,estimator,value,std_error,n_effective,excluded_truncated"
    );
    assert_eq!(lines.count(), 4);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["experiment"], "martingale-curve");
    assert_eq!(meta["spec"]["motion"]["lambda"], 1.0);
    assert_eq!(meta["truncated_replicas"], 0);
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert!(meta["version"].is_string());
}

#[test]
fn output_is_byte_identical_across_thread_counts() {
    let dir = scratch("threads");
    let spec = write_spec(&dir, KILLED_OU_CURVE);
    let mut csvs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.join(format!("t{threads}"));
        let o = simulate(&spec, &out, &["--threads", threads]);
        assert!(o.status.success());
        csvs.push(std::fs::read(out.join("results.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn overrides_change_the_run() {
    let dir = scratch("overrides");
    let spec = write_spec(&dir, KILLED_OU_CURVE);
    let out = dir.join("out");
    let o = simulate(
        &spec,
        &out,
        &["--set", "snapshot_times=[2.0]", "--set", "seed=7"],
    );
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.starts_with("2,")), "{csv}");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
}

#[test]
fn config_errors_exit_with_status_two_and_list_every_violation() {
    let dir = scratch("config");
    let spec = write_spec(&dir, KILLED_OU_CURVE);
    let out = dir.join("out");
    let o = simulate(
        &spec,
        &out,
        &["--set", "snapshot_times=[]", "--set", "motion.lambda=-1.0"],
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("snapshot_times"), "{err}");
    assert!(err.contains("λ = -1"), "{err}");
    assert!(!out.exists());

    let o = simulate(&spec, &out, &["--set", "kind=nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_diagnostics_exit_with_status_three_under_assert() {
    let dir = scratch("assert");
    let spec = write_spec(
        &dir,
        &KILLED_OU_CURVE.replace("martingale-curve", "qsd-fit"),
    );
    let out = dir.join("out");
    let strict = ["--set", "ks_tolerance=0.0", "--set", "snapshot_times=[1.0]"];
    assert_eq!(simulate(&spec, &out, &strict).status.code(), Some(0));
    let mut args = strict.to_vec();
    args.push("--assert");
    assert_eq!(simulate(&spec, &out, &args).status.code(), Some(3));
    let samples = std::fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(samples.starts_with("replica,value\n"));
}

#[test]
fn every_experiment_kind_runs() {
    let dir = scratch("kinds");
    let spec = write_spec(
        &dir,
        &format!(
            "paths = 2000\nratios = [0.5, 3.0]\nt_max = 30.0\n{KILLED_OU_CURVE}\n\
             [[sets]]\ninterval = [0.0, 1.0]\n"
        ),
    );
    for kind in [
        "many-to-one-check",
        "many-to-two-check",
        "martingale-curve",
        "phi",
        "l2-threshold-scan",
        "qsd-fit",
        "eta-sigma",
        "min-h-diagnostic",
    ] {
        let out = dir.join(kind);
        let o = simulate(&spec, &out, &["--set", &format!("kind=\"{kind}\"")]);
        assert!(
            o.status.success(),
            "{kind}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
        assert!(csv.lines().count() > 1, "{kind}");
    }
}

#[test]
fn verify_runs_selected_criteria() {
    let o = branchsim(&["verify", "--level", "quick", "--only", "9"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(
        stdout.lines().any(|l| l.starts_with("criterion 9 PASS")),
        "{stdout}"
    );
}

#[test]
fn shipped_experiment_files_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let table = branchsim_cli::config::load(&path, &[]).unwrap();
            branchsim_cli::config::validate(table)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 8);
}
