//! End-to-end checks of the `hbe` binary: exit codes, determinism of
//! training, and the streaming/offline beat-count relationship. Uses a
//! short synthetic database so the whole file stays fast.

use std::path::Path;
use std::process::Command;

fn hbe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hbe"))
}

fn fast_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("fast.conf");
    std::fs::write(
        &path,
        "epochs = 2\nblend_epochs = 2\nglobal_per_class = 10\npca_k = 16\n",
    )
    .unwrap();
    path
}

struct TestEnv {
    _tmp: tempfile::TempDir,
    data: std::path::PathBuf,
    work: std::path::PathBuf,
}

fn setup() -> TestEnv {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let work = tmp.path().join("work");
    std::fs::create_dir_all(&work).unwrap();
    let status = hbe()
        .args([
            "gen-data",
            "--out",
            data.to_str().unwrap(),
            "--duration-s",
            "420",
            "--records",
            "100,106,200",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    TestEnv {
        _tmp: tmp,
        data,
        work,
    }
}

#[test]
fn train_is_deterministic_and_bundles_load() {
    let env = setup();
    let cfg = fast_config(&env.work);
    let out_a = env.work.join("bundle_a");
    let out_b = env.work.join("bundle_b");
    for out in [&out_a, &out_b] {
        let output = hbe()
            .args([
                "train",
                "--record",
                "200",
                "--data-dir",
                env.data.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "7",
                "--config",
                cfg.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "train failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    // Byte-identical outputs for identical seed and inputs.
    for entry in std::fs::read_dir(&out_a).unwrap() {
        let name = entry.unwrap().file_name();
        let a = std::fs::read(out_a.join(&name)).unwrap();
        let b = std::fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs between identical runs");
    }
    assert!(out_a.join("meta.json").exists());
    assert!(out_a.join("manifest.json").exists());
    assert!(out_a.join("train_report.json").exists());
}

#[test]
fn evaluate_without_bundles_exits_2() {
    let env = setup();
    let output = hbe()
        .args([
            "evaluate",
            "--protocol",
            "C",
            "--bundles",
            env.work.join("nonexistent").to_str().unwrap(),
            "--out",
            env.work.join("results").to_str().unwrap(),
            "--data-dir",
            env.data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("200"), "missing records not listed: {stderr}");
}

#[test]
fn excluded_record_rejected() {
    let env = setup();
    let output = hbe()
        .args([
            "segment",
            "--record",
            "102",
            "--data-dir",
            env.data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_flag_rejected() {
    let output = hbe().args(["train", "--no-such-flag"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn stream_beat_count_matches_offline_minus_edges() {
    let env = setup();
    let output = hbe()
        .args([
            "stream",
            "--record",
            "106",
            "--data-dir",
            env.data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stream_beats = String::from_utf8_lossy(&output.stdout)
        .lines()
        .filter(|l| l.starts_with("beat="))
        .count();

    let seg_out = hbe()
        .args([
            "segment",
            "--record",
            "106",
            "--data-dir",
            env.data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(seg_out.status.success());
    let offline_beats = String::from_utf8_lossy(&seg_out.stdout).lines().count() - 1;

    // The stream also emits tail beats that the offline path drops as
    // edge beats, and skips beats whose window is incomplete.
    assert!(
        stream_beats >= offline_beats && stream_beats <= offline_beats + 2,
        "stream {stream_beats} vs offline {offline_beats}"
    );
}

#[test]
fn bench_reports_latency_within_budget() {
    let env = setup();
    let cfg = fast_config(&env.work);
    let bundle = env.work.join("bundle_bench");
    assert!(hbe()
        .args([
            "train",
            "--record",
            "200",
            "--data-dir",
            env.data.to_str().unwrap(),
            "--out",
            bundle.to_str().unwrap(),
            "--seed",
            "3",
            "--config",
            cfg.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let report_path = env.work.join("latency.json");
    let output = hbe()
        .args([
            "bench",
            "--record",
            "200",
            "--data-dir",
            env.data.to_str().unwrap(),
            "--bundle",
            bundle.to_str().unwrap(),
            "--repetitions",
            "2",
            "--max-beats",
            "30",
            "--out",
            report_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(report_path).unwrap()).unwrap();
    assert_eq!(report["budget_ms"], 300.0);
    assert!(report["within_budget"].as_bool().unwrap());
}
