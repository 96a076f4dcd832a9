//! End-to-end checks of the command-line surface: file outputs, NA cells,
//! exit codes and the clean/backtest round trip.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_specbt")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("specbt-cli-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Synthetic portfolio file: PITs from the stylized volatility model, with
/// optional planted outliers (PIT = 1 against a small loss).
fn write_portfolio(path: &Path, n: usize, outliers: &[usize]) {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use specbt_core::special::{std_normal_cdf, std_normal_quantile};
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let q99 = std_normal_quantile(0.99).unwrap();
    let mut out = String::from("date,pit,loss,var99\n");
    let start = chrono::NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
    for i in 0..n {
        let date = start + chrono::Days::new(i as u64);
        let z = std_normal_quantile(rng.gen_range(1e-9..1.0 - 1e-9)).unwrap();
        let vol = 0.5 + rng.gen::<f64>();
        let (pit, loss) = if outliers.contains(&i) {
            (1.0, 0.25 * q99 * vol)
        } else {
            (std_normal_cdf(z), vol * z)
        };
        out.push_str(&format!("{date},{pit},{loss},{}\n", q99 * vol));
    }
    fs::write(path, out).unwrap();
}

#[test]
fn backtest_emits_rows_and_edf() {
    let dir = tmp_dir("backtest");
    let input = dir.join("pf101.csv");
    write_portfolio(&input, 750, &[]);
    let status = Command::new(bin())
        .args([
            "backtest",
            "--input",
            input.to_str().unwrap(),
            "--output-dir",
            dir.to_str().unwrap(),
            "--format",
            "both",
        ])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("backtest.json")).unwrap()).unwrap();
    let rows = json.as_array().unwrap();
    // Default battery: ten tests on each of the two windows.
    assert_eq!(rows.len(), 20);
    for row in rows {
        for field in ["test_id", "window", "statistic", "df", "p_value", "n_used", "warnings"] {
            assert!(row.get(field).is_some(), "missing field {field}");
        }
        let p = row["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(row["portfolio"], "pf101");
    }
    // EDF plot data covers both windows with edf values in [0, 1].
    let edf = fs::read_to_string(dir.join("edf_pf101.csv")).unwrap();
    assert!(edf.lines().count() > 4);
    assert!(edf.lines().any(|l| l.starts_with("narrow,")));
    assert!(edf.lines().any(|l| l.starts_with("wide,")));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn backtest_reports_na_on_singular_regressors() {
    let dir = tmp_dir("na");
    let input = dir.join("calm.csv");
    // No PIT ever reaches the upper tail, so the indicator CVT has no
    // events and the regressor matrix is singular.
    let mut out = String::from("date,pit\n");
    let start = chrono::NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
    for i in 0..400usize {
        let date = start + chrono::Days::new(i as u64);
        out.push_str(&format!("{date},{}\n", 0.05 + 0.8 * ((i * 37 % 100) as f64) / 100.0));
    }
    fs::write(&input, out).unwrap();
    let config = dir.join("cfg.json");
    fs::write(
        &config,
        r#"{"tests":[{"id":"ZU","window":"narrow","cvt":{"variant":"EM1"},"lags":4}]}"#,
    )
    .unwrap();
    let status = Command::new(bin())
        .args([
            "backtest",
            "--input",
            input.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            dir.to_str().unwrap(),
        ])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success(), "NA cells are reported, not fatal");
    let csv = fs::read_to_string(dir.join("backtest.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.contains("NA"), "row: {row}");
    assert!(row.contains("singular"), "row: {row}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("backtest.json")).unwrap()).unwrap();
    assert!(json[0]["statistic"].is_null());
    assert!(json[0]["p_value"].is_null());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn clean_flags_outlier_and_round_trips() {
    let dir = tmp_dir("clean");
    let input = dir.join("pf202.csv");
    write_portfolio(&input, 400, &[123]);
    let status = Command::new(bin())
        .args([
            "clean",
            "--input",
            input.to_str().unwrap(),
            "--q",
            "1e-5",
            "--output-dir",
            dir.to_str().unwrap(),
        ])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("pf202_clean_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_spurious"], 1);
    let cleaned = dir.join("pf202_clean.csv");
    let text = fs::read_to_string(&cleaned).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains("spurious")).count(), 1);

    // q = 0 flags nothing.
    let dir0 = tmp_dir("clean0");
    let status = Command::new(bin())
        .args([
            "clean",
            "--input",
            input.to_str().unwrap(),
            "--q",
            "0",
            "--output-dir",
            dir0.to_str().unwrap(),
        ])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir0.join("pf202_clean_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_spurious"], 0);

    // The cleaned file is accepted by the backtest command unchanged.
    let status = Command::new(bin())
        .args([
            "backtest",
            "--input",
            cleaned.to_str().unwrap(),
            "--output-dir",
            dir.to_str().unwrap(),
        ])
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let _ = fs::remove_dir_all(&dir);
    let _ = fs::remove_dir_all(&dir0);
}

#[test]
fn exit_codes_distinguish_error_classes() {
    let dir = tmp_dir("exit");
    // Data error: malformed CSV exits 3.
    let bad = dir.join("bad.csv");
    fs::write(&bad, "date,pit\n2014-01-02,1.7\n").unwrap();
    let status = Command::new(bin())
        .args(["backtest", "--input", bad.to_str().unwrap(), "--output-dir", dir.to_str().unwrap()])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // Config error: unknown test id exits 2.
    let good = dir.join("good.csv");
    write_portfolio(&good, 100, &[]);
    let cfg = dir.join("bad_cfg.json");
    fs::write(&cfg, r#"{"tests":[{"id":"NOPE"}]}"#).unwrap();
    let status = Command::new(bin())
        .args([
            "backtest",
            "--input",
            good.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            dir.to_str().unwrap(),
        ])
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn kernels_prints_moments_and_warns_on_singular_sets() {
    let dir = tmp_dir("kernels");
    let out = Command::new(bin()).arg("kernels").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // Unit Dirac at the VaR level: mu = 0.01, sigma2 = 0.0099.
    let bin_line = text.lines().find(|l| l.starts_with("BIN")).unwrap();
    assert!(bin_line.contains("1.0000000000000"), "line: {bin_line}");
    assert!(bin_line.contains("9.90000000000"), "line: {bin_line}");

    // The collinear uniform / linear-up / linear-down triple warns.
    let cfg = dir.join("triple.json");
    fs::write(
        &cfg,
        r#"{"kernels":[
            {"family":"uniform","window":"wide"},
            {"family":"linear_inc","window":"wide"},
            {"family":"linear_dec","window":"wide"}]}"#,
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["kernels", "--config", cfg.to_str().unwrap(), "--output-dir", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("singular"), "stderr: {stderr}");
    // 101-point G samples per kernel.
    let samples = fs::read_to_string(dir.join("kernel_g_samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1 + 3 * 101);
    let _ = fs::remove_dir_all(&dir);
}
