use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use itsclust::ingest::write_interval_csv;
use itsclust::synthetic::{demo_regimes, regime_series};

fn setup(dir: &Path, extra: &str) -> std::path::PathBuf {
    let (series, _) = regime_series(&demo_regimes(), 2, 3, 4, 150, 8).unwrap();
    write_interval_csv(&series, dir.join("series.csv")).unwrap();
    let cfg = dir.join("run.toml");
    fs::write(&cfg, format!("input = \"series.csv\"\nw = 3\nbeta = 20.0\nseed = 1\n{extra}")).unwrap();
    cfg
}

fn itsclust(args: &[&str], cfg: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itsclust"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn invalid_config_exits_1_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "k = [0]\n");
    let out = itsclust(&["segment"], &cfg);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("out").exists());

    let cfg = setup(dir.path(), "unknown_key = 3\n");
    assert_eq!(code(&itsclust(&["segment"], &cfg)), 1);
}

#[test]
fn unknown_flag_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    assert_eq!(code(&itsclust(&["segment", "--bogus"], &cfg)), 1);
}

#[test]
fn missing_input_or_model_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "input = \"absent.csv\"\nw = 3\n").unwrap();
    assert_eq!(code(&itsclust(&["segment"], &cfg)), 1);

    let cfg = setup(dir.path(), "");
    assert_eq!(code(&itsclust(&["image"], &cfg)), 1);
}

#[test]
fn model_for_other_window_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    assert_eq!(code(&itsclust(&["segment"], &cfg)), 0);
    let text = fs::read_to_string(&cfg).unwrap().replace("w = 3", "w = 4");
    fs::write(&cfg, text).unwrap();
    let out = itsclust(&["image"], &cfg);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("w = 3"));
}

#[test]
fn select_k_writes_bic_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "k = [1, 2, 3]\nstandard_bic_sign = true\n");
    let out = itsclust(&["select-k"], &cfg);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("out/bic_table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "K,bic,emptyClusters");
    assert_eq!(rows.len(), 4);

    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/model.json")).unwrap()).unwrap();
    assert_eq!(model["K"], 2);
    let labels = fs::read_to_string(dir.path().join("out/labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 1 + 598);
    assert!(labels.lines().skip(1).all(|l| l.ends_with(",1") || l.ends_with(",2")));
}

#[test]
fn lambda_grid_writes_cv_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "lambda = [0.01, 0.05, 0.2]\nfolds = 3\n");
    let out = itsclust(&["segment"], &cfg);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("out/cv_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 3);
    let model: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/model.json")).unwrap()).unwrap();
    for l in model["lambda"].as_array().unwrap() {
        assert!([0.01, 0.05, 0.2].contains(&l.as_f64().unwrap()));
    }
}

#[test]
fn evaluate_prints_both_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let out = itsclust(&["evaluate"], &cfg);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let lines: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lines = lines.as_array().unwrap();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["metric"], "d1");
    assert_eq!(lines[1]["metric"], "dK");
    for l in lines {
        assert!(l["value"].as_f64().unwrap() >= 0.0);
        assert!(l["horizon"].as_u64().unwrap() > 0);
    }
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/metrics.json")).unwrap()).unwrap();
    assert_eq!(saved.as_array().unwrap(), lines);
}

#[test]
fn feature_file_with_wrong_rows_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let features = dir.path().join("features.csv");
    fs::write(&features, "windowRow,f1\n0,1.0\n1,2.0\n").unwrap();
    let out = itsclust(&["evaluate", "--features", features.to_str().unwrap()], &cfg);
    assert_eq!(code(&out), 1);
}

#[test]
fn full_k_grid_writes_six_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "k = [2, 3, 4, 5, 6, 7]\n");
    let out = itsclust(&["select-k"], &cfg);
    assert!([0, 2].contains(&code(&out)), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("out/bic_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);
    assert!(dir.path().join("out/model.json").exists());
    assert!(dir.path().join("out/labels.csv").exists());
}
