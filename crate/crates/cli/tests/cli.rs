use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rpd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpd"))
        .args(args)
        .env_remove("RPD_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn tsv() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/DatasaurusDozen.tsv")
}

fn data_rows(path: &Path) -> usize {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .count()
}

fn make_data(dir: &Path) {
    let out = rpd(&[
        "make-data",
        "--datasaurus",
        tsv().to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn make_data_writes_grid_and_replicated_truth() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path());
    assert_eq!(data_rows(&dir.path().join("train.csv")), 1278);
    assert_eq!(data_rows(&dir.path().join("ground_truth.csv")), 6390);
}

#[test]
fn missing_tsv_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = rpd(&[
        "make-data",
        "--datasaurus",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reference_against_itself_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path());
    let train = dir.path().join("train.csv");
    let out = rpd(&[
        "eval",
        "--samples",
        train.to_str().unwrap(),
        "--reference",
        train.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let mean = report.lines().find(|l| l.starts_with("rw_w1,")).unwrap();
    let value: f64 = mean.split(',').nth(2).unwrap().parse().unwrap();
    assert!(value.abs() < 1e-12, "{mean}");
}

#[test]
fn verify_passes_on_small_draw_count() {
    let out = rpd(&["verify", "--draws", "500"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("s.conf");
    std::fs::write(&conf, "steps = 50\nnoise-min = 0.01\n").unwrap();
    let from_file = rpd(&["schedule", "--config", conf.to_str().unwrap()]);
    assert!(from_file.status.success());
    assert_eq!(
        String::from_utf8_lossy(&from_file.stdout).lines().count(),
        51
    );
    let overridden = rpd(&[
        "schedule",
        "--config",
        conf.to_str().unwrap(),
        "--steps",
        "20",
    ]);
    assert_eq!(
        String::from_utf8_lossy(&overridden.stdout).lines().count(),
        21
    );
    let missing = rpd(&[
        "schedule",
        "--config",
        dir.path().join("absent").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn short_training_and_sampling_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path());
    let train = dir.path().join("train.csv");
    let run = |name: &str| -> String {
        let out_dir = dir.path().join(name);
        let out_s = out_dir.to_str().unwrap();
        let t = rpd(&[
            "train",
            "--data",
            train.to_str().unwrap(),
            "--mode",
            "ddpm",
            "--iters",
            "20",
            "--batch",
            "64",
            "--hidden",
            "16,16",
            "--seed",
            "3",
            "--out",
            out_s,
        ]);
        assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
        let predictor = out_dir.join("predictor.txt");
        let s = rpd(&[
            "sample",
            "--predictor",
            predictor.to_str().unwrap(),
            "--count",
            "50",
            "--seed",
            "3",
            "--out",
            out_s,
        ]);
        assert!(s.status.success(), "{}", String::from_utf8_lossy(&s.stderr));
        std::fs::read_to_string(out_dir.join("samples.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(a.lines().count(), 51);
}

#[test]
fn rpd_mode_without_prior_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path());
    let out = rpd(&[
        "train",
        "--data",
        dir.path().join("train.csv").to_str().unwrap(),
        "--mode",
        "rpd-eps",
        "--iters",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
