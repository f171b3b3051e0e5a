use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use dpbarrier_cli::{
    cmd_account, cmd_calibrate, cmd_mask_demo, cmd_seq_eps, load_session_config, CliError,
};
use dpbarrier_core::accounting::{epsilon_for_mu, sequence_epsilon};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpbarrier"))
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn calibrate_without_correction_has_equal_sigmas() {
    let c = cmd_calibrate(1000, 0, 0.0, 8.0, 1e-5, 0.0).unwrap();
    assert_eq!(c.sigma_step, c.sigma_effective);
    let c = cmd_calibrate(1000, 0, 0.0, 8.0, 1e-5, 0.7).unwrap();
    assert!((c.sigma_effective - 0.3 * c.sigma_step).abs() < 1e-12 * c.sigma_step);
}

#[test]
fn calibrated_sigma_round_trips_through_account() {
    let c = cmd_calibrate(500, 50, 20.0, 3.0, 1e-6, 0.5).unwrap();
    let query = format!(
        r#"{{"events": [
            {{"sensitivity": 1.0, "sigma": {}, "count": 500}},
            {{"sensitivity": {}, "sigma": 20.0, "count": 50}}
        ], "delta": 1e-6, "epsilon": 3.0}}"#,
        c.sigma_effective,
        std::f64::consts::SQRT_2
    );
    let answer = cmd_account(&query).unwrap();
    let delta = answer.delta_at_epsilon.unwrap();
    assert!(delta <= 1e-6 && delta > 1e-6 * (1.0 - 1e-6), "{delta}");
    assert!((answer.epsilon_at_delta.unwrap() - 3.0).abs() < 1e-6);
}

#[test]
fn infeasible_budget_exits_3_naming_the_histogram_term() {
    let out = bin()
        .args([
            "calibrate",
            "--iterations",
            "100",
            "--histogram-rounds",
            "100",
            "--sigma-g",
            "1",
        ])
        .args(["--epsilon", "1", "--delta", "1e-5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("histogram aggregation term"));
    assert!(matches!(
        cmd_calibrate(100, 100, 1.0, 1.0, 1e-5, 0.0),
        Err(e @ CliError::Infeasible(_)) if e.exit_code() == 3
    ));
}

#[test]
fn account_rejects_bad_input() {
    assert!(matches!(cmd_account("{"), Err(CliError::Config(_))));
    assert!(matches!(
        cmd_account(r#"{"events": []}"#),
        Err(CliError::Config(_))
    ));
    let bad = r#"{"events": [{"sensitivity": 1, "sigma": 0, "count": 1}], "delta": 1e-5}"#;
    assert!(matches!(cmd_account(bad), Err(CliError::Config(_))));
    let empty = cmd_account(r#"{"events": [], "delta": 1e-5, "epsilon": 1}"#).unwrap();
    assert_eq!(empty.mu, 0.0);
    assert_eq!(empty.delta_at_epsilon, Some(0.0));
}

#[test]
fn tiny_train_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let mut csvs = Vec::new();
    for (run, scheduler) in [
        ("a", "sequential"),
        ("b", "sequential"),
        ("c", "concurrent"),
    ] {
        let out_dir = dir.path().join(run);
        let status = bin()
            .args(["train", "--config"])
            .arg(config_path("tiny.json"))
            .arg("--out")
            .arg(&out_dir)
            .args(["--scheduler", scheduler])
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        csvs.push(std::fs::read(out_dir.join("report.csv")).unwrap());
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["stop_reason"], "max_iterations");
        assert_eq!(manifest["iterations_completed"], 20);
        assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
        let model = std::fs::read_to_string(out_dir.join("model.json")).unwrap();
        dpbarrier_core::tensor::MlpModel::from_checkpoint_json(&model).unwrap();
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0], csvs[2]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    assert!(text.starts_with("iteration,loss,accuracy,clip_bound,epsilon\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn seed_override_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let read = |seed: &str, name: &str| {
        let out_dir = dir.path().join(name);
        let status = bin()
            .args(["train", "--seed", seed, "--config"])
            .arg(config_path("tiny.json"))
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(status.status.success());
        std::fs::read(out_dir.join("report.csv")).unwrap()
    };
    assert_ne!(read("1", "x"), read("2", "y"));
}

#[test]
fn budget_exhaustion_reaches_the_budget() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["train", "--config"])
        .arg(config_path("budgeted.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stop_reason"], "budget_exhausted");
    assert_eq!(manifest["iterations_completed"], 30);
    let eps = manifest["final_epsilon"].as_f64().unwrap();
    assert!((eps - 4.0).abs() < 1e-6, "{eps}");
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let column: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(column.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*column.last().unwrap(), eps);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"session_id": "x"}"#).unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["train"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seq_eps_columns() {
    let lambdas = [0.0, 0.3, 0.7, 0.9];
    let csv = cmd_seq_eps(60, &lambdas, 8.0, 1e-5).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,lambda=0,lambda=0.3,lambda=0.7,lambda=0.9"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 60);
    for (i, row) in rows.iter().enumerate() {
        let n = i as u64 + 1;
        assert_eq!(row[0], n as f64);
        let plain = epsilon_for_mu(1e-5, (n as f64).sqrt() / 8.0);
        assert!((row[1] - plain).abs() < 1e-9, "n={n}");
        for col in 2..row.len() {
            assert!(row[col] <= row[1] + 1e-12, "n={n} col={col}");
        }
    }
    for col in 1..=lambdas.len() {
        assert!(rows.windows(2).all(|w| w[0][col] <= w[1][col]));
    }
    assert!((rows[9][3] - sequence_epsilon(10, 0.7, 8.0 / 0.3, 1e-5).unwrap()).abs() < 1e-12);
    assert!(cmd_seq_eps(5, &[1.0], 1.0, 1e-5).is_err());
}

#[test]
fn mask_demo_sums_to_realized_noise() {
    let config = load_session_config(&config_path("tiny.json"), Some(5)).unwrap();
    let demo = cmd_mask_demo(&config).unwrap();
    assert_eq!(demo.masks.len(), 2);
    assert!(demo.max_abs_sum_error < 1e-9);
    assert_eq!(demo.sigma_step, 2.0);
    let out = bin()
        .args(["mask-demo", "--config"])
        .arg(config_path("tiny.json"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["masks"].as_array().unwrap().len(), 2);
}
