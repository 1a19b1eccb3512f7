//! End-to-end tests of the command-line binary: exit codes, determinism of
//! written reports, sketch persistence, and usage errors.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mcb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcb"))
}

fn run(args: &[&str]) -> Output {
    mcb().args(args).output().expect("binary runs")
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mcb_cli_{name}_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn verify_passes_with_default_tolerances() {
    let output = run(&["verify"]);
    let text = stdout_of(&output);
    assert!(output.status.success(), "verify failed:\n{text}");
    assert!(text.contains("all suites passed"), "{text}");
    assert!(text.contains("pooling-oracle-equivalence"), "{text}");
}

#[test]
fn verify_with_zero_tolerance_reports_failures() {
    let output = run(&["verify", "--tolerance", "0"]);
    let text = stdout_of(&output);
    assert!(!output.status.success());
    assert_eq!(output.status.code(), Some(1));
    assert!(text.contains("FAIL"), "{text}");
}

#[test]
fn bench_at_reference_scale_reports_both_param_columns() {
    let output = run(&["bench", "--reps", "1", "--batch", "2"]);
    let text = stdout_of(&output);
    assert!(output.status.success(), "{text}");
    assert!(text.contains("12582912000"), "{text}");
    assert!(text.contains("48000000"), "{text}");
    assert!(text.contains("refused-over-cap"), "{text}");
}

#[test]
fn bench_handles_degenerate_sizes() {
    let output = run(&["bench", "--n1", "1", "--n2", "1", "--d", "1", "--classes", "1", "--batch", "1", "--reps", "1"]);
    assert!(output.status.success(), "{}", stdout_of(&output));
}

#[test]
fn thread_cap_env_does_not_change_results() {
    let dir1 = temp_dir("threads1");
    let dir2 = temp_dir("threads2");
    for (dir, threads) in [(&dir1, "1"), (&dir2, "4")] {
        let output = mcb()
            .env("MCB_THREADS", threads)
            .args([
                "ablate", "--methods", "mcb", "--seeds", "1,2", "--epochs", "2", "--train-count",
                "120", "--test-count", "50", "--out", dir.to_str().unwrap(),
            ])
            .output()
            .expect("binary runs");
        assert!(output.status.success(), "{}", stdout_of(&output));
    }
    let a = std::fs::read(dir1.join("ablate_report.json")).unwrap();
    let b = std::fs::read(dir2.join("ablate_report.json")).unwrap();
    assert_eq!(a, b, "thread cap changed deterministic outputs");
    std::fs::remove_dir_all(&dir1).ok();
    std::fs::remove_dir_all(&dir2).ok();
}

#[test]
fn train_reports_are_byte_identical_across_reruns() {
    let dir1 = temp_dir("train1");
    let dir2 = temp_dir("train2");
    for dir in [&dir1, &dir2] {
        let output = run(&[
            "train", "--epochs", "3", "--seed", "11", "--train-count", "300", "--test-count",
            "100", "--export-data", "--out", dir.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{}", stdout_of(&output));
    }
    for file in ["train_report.json", "train_history.csv", "train_data.jsonl", "test_data.jsonl"] {
        let a = std::fs::read(dir1.join(file)).unwrap();
        let b = std::fs::read(dir2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    std::fs::remove_dir_all(&dir1).ok();
    std::fs::remove_dir_all(&dir2).ok();
}

#[test]
fn ablate_writes_expected_row_counts() {
    let dir = temp_dir("ablate");
    let output = run(&[
        "ablate", "--methods", "mcb,concat,sum", "--seeds", "1..5", "--epochs", "2",
        "--train-count", "200", "--test-count", "80", "--out", dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stdout_of(&output));
    let csv = std::fs::read_to_string(dir.join("ablate_report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    // Header + 15 cells + (mean + std) per method.
    assert_eq!(lines.len(), 1 + 15 + 6, "unexpected CSV:\n{csv}");
    assert!(lines[0].starts_with("method,config,param_count"));
    assert_eq!(csv.matches(",mean").count(), 3, "{csv}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn ablate_reports_ignore_wall_clock_in_deterministic_json() {
    let dir1 = temp_dir("ablate_det1");
    let dir2 = temp_dir("ablate_det2");
    for dir in [&dir1, &dir2] {
        let output = run(&[
            "ablate", "--methods", "mcb", "--seeds", "1,2", "--epochs", "2", "--train-count",
            "150", "--test-count", "60", "--out", dir.to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{}", stdout_of(&output));
    }
    let a = std::fs::read(dir1.join("ablate_report.json")).unwrap();
    let b = std::fs::read(dir2.join("ablate_report.json")).unwrap();
    assert_eq!(a, b, "deterministic ablation JSON differs");
    std::fs::remove_dir_all(&dir1).ok();
    std::fs::remove_dir_all(&dir2).ok();
}

#[test]
fn sketch_save_load_round_trips_via_binary() {
    let dir = temp_dir("sketch");
    let path = dir.join("params.json");
    let output = run(&[
        "sketch", "save", "--path", path.to_str().unwrap(), "--n", "12", "--d", "9", "--seed",
        "21",
    ]);
    assert!(output.status.success(), "{}", stdout_of(&output));
    let output = run(&["sketch", "load", "--path", path.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(stdout_of(&output).contains("checksum ok"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn truncated_sketch_file_exits_with_error_not_crash() {
    let dir = temp_dir("sketch_trunc");
    let path = dir.join("params.json");
    let output = run(&[
        "sketch", "save", "--path", path.to_str().unwrap(), "--n", "12", "--d", "9", "--seed",
        "21",
    ]);
    assert!(output.status.success());
    let raw = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &raw[..raw.len() / 3]).unwrap();
    let output = run(&["sketch", "load", "--path", path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(err.contains("corrupt file"), "{err}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn golden_sketch_file_loads_with_identical_params() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sketch_seed7_n16_d32.json");
    let output = run(&["sketch", "load", "--path", golden.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stdout_of(&output));
    assert!(stdout_of(&output).contains("n=16 d=32 seed=7"));
}

#[test]
fn unknown_command_is_a_usage_error() {
    let output = run(&["frobnicate"]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(err.contains("frobnicate"), "{err}");
}

#[test]
fn bad_flag_value_names_the_flag() {
    let output = run(&["train", "--epochs", "three"]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(err.contains("--epochs"), "{err}");
}

#[test]
fn unknown_pooling_method_is_a_usage_error() {
    let output = run(&["ablate", "--methods", "mcb,warp-drive", "--seeds", "1", "--epochs", "1"]);
    assert_eq!(output.status.code(), Some(2));
    let err = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(err.contains("warp-drive"), "{err}");
}

#[test]
fn export_attention_writes_row_major_maps() {
    let dir = temp_dir("attention");
    let output = run(&[
        "export-attention", "--epochs", "1", "--glimpses", "2", "--seed", "5", "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stdout_of(&output));
    let csv = std::fs::read_to_string(dir.join("attention_maps_sample0.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header + one row per glimpse:\n{csv}");
    assert!(lines[0].starts_with("loc_0,"));
    for line in &lines[1..] {
        let sum: f64 = line.split(',').map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9, "map row should sum to 1: {line}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn ground_command_runs_and_reports() {
    let dir = temp_dir("ground");
    let output = run(&[
        "ground", "--methods", "mcb,concat", "--seeds", "1", "--epochs", "3", "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stdout_of(&output));
    assert!(dir.join("ground_report.csv").exists());
    assert!(dir.join("ground_report.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}
