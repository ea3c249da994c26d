use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gbm-risk"));
    c.env_remove("GBM_RISK_OUT_DIR");
    c
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--config"])
        .arg(fixture("equity_like.toml"))
        .args([
            "--n-paths",
            "300",
            "--horizon-years",
            "0.1",
            "--record-paths",
            "--workers",
            "2",
        ])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_echo"]["run"]["n_paths"], 300);
    assert_eq!(report["config_echo"]["effective"]["n_steps"], 25);
    assert_eq!(
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap(),
        report
    );
    assert!(dir.path().join("percentiles.csv").exists());
    let paths = fs::read_to_string(dir.path().join("paths.csv")).unwrap();
    assert_eq!(paths.lines().count(), 1 + 300 * 26 * 3);
}

#[test]
fn explicit_weights_from_flags_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("GBM_RISK_OUT_DIR", dir.path())
        .args(["simulate", "--price-csv"])
        .arg(fixture("crypto_like.csv"))
        .args([
            "--weights",
            "0.2,0.3,0.5",
            "--n-paths",
            "100",
            "--seed",
            "9",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["weights"][2]["weight"], 0.5);
    assert_eq!(
        report["config_echo"]["run"]["portfolio_mode"],
        "explicit-weights"
    );
    assert_eq!(report["config_echo"]["run"]["seed"], 9);
}

#[test]
fn estimate_optimize_backtest_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["estimate", "optimize", "backtest"] {
        let mut c = bin();
        c.arg(cmd).arg("--config").arg(fixture("crypto_like.toml"));
        if cmd == "backtest" {
            c.args(["--backtest-window", "60"]);
        }
        let out = c.arg("--out-dir").arg(dir.path()).output().unwrap();
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(dir.path().join(format!("{cmd}.json")).exists());
    }
    let out = bin()
        .arg("compare")
        .arg("--config-a")
        .arg(fixture("crypto_like.toml"))
        .arg("--config-b")
        .arg(fixture("equity_like.toml"))
        .args(["--label-a", "crypto", "--label-b", "equity"])
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("equity,"));
}

#[test]
fn failures_exit_nonzero_with_stage() {
    let out = bin()
        .args(["simulate", "--price-csv", "/definitely/missing.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("load:"), "{err}");

    let out = bin()
        .args(["simulate", "--price-csv"])
        .arg(fixture("crypto_like.csv"))
        .args(["--alpha", "1.5"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = bin().arg("simulate").output().unwrap();
    assert!(!out.status.success());
}
