use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epirecon"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_kind(out: &Output) -> String {
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr carries JSON");
    err["kind"].as_str().unwrap().to_string()
}

fn simulate_case(dir: &Path, model: &str, theta: &str, prefix: &str, sampling: &str) {
    ok(
        dir,
        &[
            "simulate", "--model", model, "--theta", theta, "--x0", "0.9,0.1", "--h", "0.03125",
            "--tmax", "5", "--sampling", sampling, "--prefix", prefix,
        ],
    );
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn simulate_writes_expected_rows() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs", "0.3,0.25,0.1,0.05", "c1", "continuous");
    simulate_case(d, "sirs", "0.3,0.25,0.1,0.05", "daily", "daily");
    assert_eq!(lines(&d.join("c1_observations.csv")), 162);
    assert_eq!(lines(&d.join("c1_chain.csv")), 162);
    assert_eq!(lines(&d.join("daily_observations.csv")), 7);
    assert!(!d.join("daily_chain.csv").exists());
    let head = std::fs::read_to_string(d.join("c1_trajectory.csv")).unwrap();
    assert!(head.starts_with("t,S,I\n"));
}

#[test]
fn reconstruct_case1_with_wronskian() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs", "0.3,0.25,0.1,0.05", "c1", "continuous");
    let out = ok(
        d,
        &["reconstruct", "--input", "c1_chain.csv", "--model", "sirs", "--method", "wronskian", "--at", "1.0"],
    );
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["regime"], "full");
    let truth = [("k", 0.3), ("beta", 0.25), ("gamma", 0.1), ("mu", 0.05)];
    for (name, value) in truth {
        let got = v["theta_hat"][name].as_f64().unwrap();
        assert!(((got - value) / value).abs() <= 1e-9, "{name}: {got}");
    }
}

#[test]
fn simulate_then_multitime_round_trip() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "simulate", "--model", "sir-demog", "--theta", "0.4,0.8,0.2,0.05", "--x0", "0.7,0.2",
            "--prefix", "sd",
        ],
    );
    let out = ok(d, &["reconstruct", "--input", "sd_chain.csv", "--model", "sir-demog"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    for (name, value) in [("k", 0.4), ("beta", 0.8), ("gamma", 0.2), ("delta", 0.05)] {
        let got = v["theta_hat"][name].as_f64().unwrap();
        assert!(((got - value) / value).abs() <= 1e-9, "{name}: {got}");
    }
}

#[test]
fn case2_reports_sir_regime() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs-ext", "0.3,0.25,0.1,0", "c2", "continuous");
    let out = ok(d, &["reconstruct", "--input", "c2_chain.csv", "--model", "sirs-ext"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["regime"], "SIR");
    assert!((v["partial_combos"]["beta_S0"].as_f64().unwrap() - 0.225).abs() < 1e-9);
    assert!(v["theta_hat"].is_null());
}

#[test]
fn equilibrium_start_fails_with_singular_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    // Endemic state of Case 1: S = gamma/beta, I = mu (1 - S) / (gamma + mu).
    let s = 0.1 / 0.25;
    let i = 0.05 * (1.0 - s) / 0.15;
    ok(
        d,
        &[
            "simulate", "--model", "sirs", "--theta", "0.3,0.25,0.1,0.05", "--x0",
            &format!("{s},{i}"), "--chain", "lie", "--prefix", "ee",
        ],
    );
    let out = run(d, &["reconstruct", "--input", "ee_chain.csv", "--model", "sirs"]);
    assert!(!out.status.success());
    assert_eq!(error_kind(&out), "SingularEverywhere");
}

#[test]
fn daily_data_rejected_for_reconstruction() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs-ext", "0.3,0.25,0.1,0", "d2", "daily");
    let out = run(d, &["reconstruct", "--input", "d2_observations.csv", "--model", "sirs-ext", "--fd"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "MethodNeedsDerivatives");
}

#[test]
fn finite_differences_on_request() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs", "0.3,0.25,0.1,0.05", "c1", "continuous");
    let out = run(d, &["reconstruct", "--input", "c1_observations.csv", "--model", "sirs"]);
    assert_eq!(error_kind(&out), "MethodNeedsDerivatives");
    let out = ok(d, &["reconstruct", "--input", "c1_observations.csv", "--model", "sirs", "--fd"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    // Second-order differences at h = 1/32 only support a coarse estimate.
    for (name, value) in [("k", 0.3), ("beta", 0.25), ("gamma", 0.1), ("mu", 0.05)] {
        let got = v["theta_hat"][name].as_f64().unwrap();
        assert!(((got - value) / value).abs() < 0.1, "{name}: {got}");
    }
}

#[test]
fn discriminate_both_cases() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs", "0.3,0.25,0.1,0.05", "c1", "continuous");
    simulate_case(d, "sirs-ext", "0.3,0.25,0.1,0", "c2", "continuous");
    for (file, expected) in [("c1_chain.csv", "SIRS"), ("c2_chain.csv", "SIR")] {
        let v: Value = serde_json::from_str(&ok(d, &["discriminate", "--input", file, "--approach", "both"])).unwrap();
        assert_eq!(v["verdict"], expected);
        assert_eq!(v["approach1"]["verdict"], expected);
        assert_eq!(v["approach2"]["verdict"], expected);
    }
    let v: Value = serde_json::from_str(&ok(d, &["discriminate", "--input", "c1_chain.csv", "--approach", "2"])).unwrap();
    assert!(v["approach1"].is_null());
}

#[test]
fn calibrate_writes_results_and_summary() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs-ext", "0.3,0.25,0.1,0", "d2", "daily");
    let args = [
        "calibrate", "--input", "d2_observations.csv", "--starts", "3", "--seed", "42",
        "--max-iter", "3000", "--truth", "0.3,0.25,0.1,0,0.9",
    ];
    ok(d, &args);
    let csv = std::fs::read_to_string(d.join("calibration_results.csv")).unwrap();
    assert!(csv.starts_with("index,start_k,"));
    assert!(csv.lines().next().unwrap().contains("abs_err_k"));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("calibration_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["starts"], 3);
    let stats = &summary["combo_stats_converged"]["gamma"];
    if !stats.is_null() {
        assert!(stats["min"].as_f64().unwrap() <= stats["median"].as_f64().unwrap());
        assert!(stats["median"].as_f64().unwrap() <= stats["max"].as_f64().unwrap());
    }
    // Reruns are byte-identical.
    ok(d, &[&args[..], &["--prefix", "again"]].concat());
    assert_eq!(csv, std::fs::read_to_string(d.join("again_results.csv")).unwrap());
}

#[test]
fn zero_starts_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs-ext", "0.3,0.25,0.1,0", "d2", "daily");
    let out = run(d, &["calibrate", "--input", "d2_observations.csv", "--starts", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "BadArgs");
}

#[test]
fn report_gap_stays_below_bound() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let csv = ok(d, &["report"]);
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("t,S_sir,I_sir,S_sirs,I_sirs,gap,bound"));
    let mut n = 0;
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(v[5] <= v[6]);
        n += 1;
    }
    assert_eq!(n, 801);
    let zero = ok(d, &["report", "--mu", "0"]);
    for row in zero.lines().skip(1) {
        assert_eq!(row.split(',').nth(5).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    std::fs::write(
        d.join("run.conf"),
        "# case 1\nmodel = sirs\ntheta = 0.3,0.25,0.1,0.05\nx0 = 0.9,0.1\ntmax = 5\nprefix = cfg\n",
    )
    .unwrap();
    ok(d, &["--config", "run.conf", "simulate", "--tmax", "2"]);
    assert_eq!(lines(&d.join("cfg_observations.csv")), 66);
}

#[test]
fn unknown_model_reports_parse_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["simulate", "--model", "seir", "--theta", "1", "--x0", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "Parse");
}

#[test]
fn timing_is_opt_in() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate_case(d, "sirs", "0.3,0.25,0.1,0.05", "c1", "continuous");
    let plain = ok(d, &["reconstruct", "--input", "c1_chain.csv", "--model", "sirs"]);
    assert!(!plain.contains("elapsed_seconds"));
    let timed = ok(d, &["--timing", "reconstruct", "--input", "c1_chain.csv", "--model", "sirs"]);
    assert!(timed.contains("elapsed_seconds"));
}
