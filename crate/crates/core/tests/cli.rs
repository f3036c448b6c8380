//! End-to-end tests of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_autocorr"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env_remove("AUTOCORR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_fixture(dir: &Path, len: usize, rho: f64, out: &str) -> PathBuf {
    let out_arg = dir.join(out);
    let o = run_in(
        dir,
        &[
            "simulate",
            "--len",
            &len.to_string(),
            "--rho",
            &rho.to_string(),
            "--sigma",
            "0.5",
            "--seed",
            "11",
            "--out",
            out_arg.to_str().unwrap(),
        ],
    );
    assert_ok(&o);
    out_arg.join("simulated.csv")
}

const FIT_FAST: &[&str] = &[
    "--epochs", "8", "--window", "6", "--batch", "64", "--hidden", "8", "--patience", "0",
];

#[test]
fn help_exits_zero_for_every_subcommand() {
    for sub in [
        "fit",
        "diagnose",
        "gridsearch-rho",
        "simulate",
        "bench-regression",
        "bench-forecast",
        "criticals",
        "classical-fit",
    ] {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success(), "{sub} --help failed");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--seed"), "{sub} help misses --seed");
        assert!(text.contains("--out"), "{sub} help misses --out");
    }
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
}

#[test]
fn simulate_then_diagnose_recovers_rho() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &[
            "simulate", "--len", "1000000", "--rho", "0.5", "--sigma", "1", "--seed", "5",
            "--out", "sim",
        ],
    );
    assert_ok(&o);
    let o = run_in(
        dir.path(),
        &["diagnose", "sim/simulated.csv", "--out", "diag"],
    );
    assert_ok(&o);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("diag/diagnose.json")).unwrap())
            .unwrap();
    let mean = report["mean_autocorrelation"].as_f64().unwrap();
    assert!((mean - 0.5).abs() < 0.01, "diagnosed {mean}");
    assert_eq!(report["verdict"], "no adjustment indicated");
}

#[test]
fn diagnose_handles_constant_residuals_gracefully() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("zeros.csv"), "r\n0\n0\n0\n0\n").unwrap();
    let o = run_in(dir.path(), &["diagnose", "zeros.csv", "--out", "d"]);
    assert_ok(&o); // undefined statistic is not an error
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("undefined"), "stdout: {text}");
}

#[test]
fn malformed_csv_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n3\n").unwrap();
    let o = run_in(dir.path(), &["fit", "bad.csv", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_in(dir.path(), &["fit", "missing.csv", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_method_exits_two_and_lists_known() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), 200, 0.5, "sim");
    let mut args = vec!["fit", csv.to_str().unwrap(), "--method", "bogus", "--out", "f"];
    args.extend_from_slice(FIT_FAST);
    let o = run_in(dir.path(), &args);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("wo") && err.contains("mpw"), "stderr: {err}");
}

#[test]
fn fit_method_list_prints_registry() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("dummy.csv"), "a\n1\n2\n").unwrap();
    let o = run_in(dir.path(), &["fit", "dummy.csv", "--method", "list"]);
    assert_ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["wo", "mpw", "w"] {
        assert!(text.contains(&format!("{name}:")), "missing {name} in {text}");
    }
}

fn read_report(dir: &Path, sub: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(sub).join("fit_report.json")).unwrap())
        .unwrap()
}

#[test]
fn mode_none_equals_frozen_zero_rrmse() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), 300, 0.6, "sim");
    let base = ["fit", csv.to_str().unwrap(), "--seed", "3"];
    let mut a: Vec<&str> = base.to_vec();
    a.extend_from_slice(&["--method", "wo", "--out", "none"]);
    a.extend_from_slice(FIT_FAST);
    assert_ok(&run_in(dir.path(), &a));
    let mut b: Vec<&str> = base.to_vec();
    b.extend_from_slice(&["--mode", "both", "--freeze-rho", "0", "--out", "frozen"]);
    b.extend_from_slice(FIT_FAST);
    assert_ok(&run_in(dir.path(), &b));

    let ra = read_report(dir.path(), "none");
    let rb = read_report(dir.path(), "frozen");
    assert_eq!(ra["test_rrmse"], rb["test_rrmse"]);
    assert!(ra["remaining_autocorrelation_mean"].is_number());
    assert_eq!(ra["format_version"], 1);
}

#[test]
fn fit_is_bit_for_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), 300, 0.6, "sim");
    for out in ["r1", "r2"] {
        let mut args = vec!["fit", csv.to_str().unwrap(), "--seed", "9", "--out", out];
        args.extend_from_slice(FIT_FAST);
        assert_ok(&run_in(dir.path(), &args));
    }
    for name in ["fit_report.json", "train_curve.csv", "valid_curve.csv", "checkpoint.json"] {
        let a = std::fs::read(dir.path().join("r1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn config_file_yields_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate_fixture(dir.path(), 300, 0.6, "sim");
    std::fs::write(
        dir.path().join("cfg.toml"),
        "epochs = 5\nwindow = 6\nbatch = 64\nhidden = 8\npatience = 0\nseed = 4\n",
    )
    .unwrap();
    // file only
    assert_ok(&run_in(
        dir.path(),
        &["fit", csv.to_str().unwrap(), "--config", "cfg.toml", "--out", "file_only"],
    ));
    let r = read_report(dir.path(), "file_only");
    assert_eq!(r["config"]["epochs"], 5);
    assert_eq!(r["seed"], 4);
    // flag overrides file
    assert_ok(&run_in(
        dir.path(),
        &[
            "fit", csv.to_str().unwrap(), "--config", "cfg.toml", "--epochs", "7", "--out",
            "flag_wins",
        ],
    ));
    let r = read_report(dir.path(), "flag_wins");
    assert_eq!(r["config"]["epochs"], 7);
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["criticals"])
        .current_dir(dir.path())
        .env("AUTOCORR_OUT_DIR", "env_out")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("env_out/criticals.json").exists());
}

#[test]
fn criticals_prints_paper_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["criticals", "--out", "c"]);
    assert_ok(&o);
    let table: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/criticals.json")).unwrap())
            .unwrap();
    let entries = table["table"]["entries"].as_array().unwrap();
    let as_pairs: Vec<(f64, f64)> = entries
        .iter()
        .map(|e| (e[0].as_f64().unwrap(), e[1].as_f64().unwrap()))
        .collect();
    assert_eq!(as_pairs, vec![(0.10, 0.857), (0.05, 0.928), (0.01, 0.984)]);
    assert!(table["effective_config"]["seed"].is_number());
}

#[test]
fn classical_fit_recovers_known_line() {
    let dir = tempfile::tempdir().unwrap();
    // y = 2x + 1 + small iid noise
    let mut csv = String::from("x,y\n");
    let mut state = 1u64;
    for _ in 0..500 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let x = ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let noise = (((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5) * 0.01;
        csv.push_str(&format!("{x},{}\n", 2.0 * x + 1.0 + noise));
    }
    std::fs::write(dir.path().join("lin.csv"), csv).unwrap();
    let o = run_in(dir.path(), &["classical-fit", "lin.csv", "--out", "cf"]);
    assert_ok(&o);
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cf/classical.json")).unwrap())
            .unwrap();
    for est in result["estimates"].as_array().unwrap() {
        let beta = est["beta"].as_array().unwrap();
        assert!((beta[0].as_f64().unwrap() - 1.0).abs() < 0.01, "{est}");
        assert!((beta[1].as_f64().unwrap() - 2.0).abs() < 0.01, "{est}");
    }
}
