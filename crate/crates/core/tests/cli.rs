//! End-to-end tests of the command-line interface: exit codes, artifact
//! files and the partial-failure contract.

use std::path::{Path, PathBuf};
use std::process::Command;

use mimic::config::ExperimentConfig;
use mimic::mocap::{canonical_to_bvh, synthetic, JointMap, MotionClip};
use mimic::skeleton::{build_default_skeleton, scale_skeleton};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimic"))
}

fn write_fixture_bvh(dir: &Path, name: &str, seconds: f64) -> PathBuf {
    let spec = build_default_skeleton();
    let sk = scale_skeleton(&spec, spec.reference_height).unwrap();
    let clip = synthetic::walk_clip(&sk, seconds);
    let text = canonical_to_bvh(&clip, &spec);
    let path = dir.join(format!("{name}.bvh"));
    std::fs::write(&path, text).unwrap();
    path
}

fn write_identity_map(dir: &Path) -> PathBuf {
    let spec = build_default_skeleton();
    let map = JointMap::identity(&spec);
    let path = dir.join("map.json");
    std::fs::write(&path, serde_json::to_string(&map).unwrap()).unwrap();
    path
}

fn small_config(dir: &Path, iterations: usize, seed: u64) -> PathBuf {
    let cfg = ExperimentConfig {
        seed,
        out_dir: dir.join(format!("out-{seed}")),
        clips: vec!["builtin:stand".into()],
        iterations,
        checkpoint_interval: 1000,
        eval_interval: 0,
        policy_hidden: vec![16],
        value_hidden: vec![16],
        ppo: mimic::rl::PpoConfig {
            n_envs: 4,
            rollout_steps: 5,
            minibatches: 2,
            epochs: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let path = dir.join(format!("config-{seed}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn ingest_converts_valid_bvh_files() {
    let dir = tempfile::tempdir().unwrap();
    let map = write_identity_map(dir.path());
    let a = write_fixture_bvh(dir.path(), "walk_a", 1.0);
    let b = write_fixture_bvh(dir.path(), "walk_b", 0.8);
    let out = dir.path().join("clips");
    let status = bin()
        .args(["ingest", "--map"])
        .arg(&map)
        .arg("--out")
        .arg(&out)
        .arg(&a)
        .arg(&b)
        .status()
        .unwrap();
    assert!(status.success());
    let clip = MotionClip::load(&out.join("walk_a.clip.json")).unwrap();
    assert!((clip.frame_rate - 36.0).abs() < 1e-9);
    assert!((clip.subject_height - 1.75).abs() < 1e-4);
}

#[test]
fn ingest_partial_failure_still_writes_good_clips() {
    let dir = tempfile::tempdir().unwrap();
    let map = write_identity_map(dir.path());
    let good = write_fixture_bvh(dir.path(), "good", 0.8);
    let bad = dir.path().join("corrupt.bvh");
    std::fs::write(&bad, "HIERARCHY\nROOT pelvis\n{\n  garbage").unwrap();
    let out = dir.path().join("clips");
    let output = bin()
        .args(["ingest", "--map"])
        .arg(&map)
        .arg("--out")
        .arg(&out)
        .arg(&good)
        .arg(&bad)
        .output()
        .unwrap();
    // Data error exit code, but the good clip was written.
    assert_eq!(output.status.code(), Some(2));
    assert!(out.join("good.clip.json").exists());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("corrupt.bvh"));
}

#[test]
fn ingest_without_files_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let map = write_identity_map(dir.path());
    let output = bin().args(["ingest", "--map"]).arg(&map).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn synth_sensors_writes_jsonl_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stand.sensors.jsonl");
    let status = bin()
        .args(["synth-sensors", "builtin:stand", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let first = text.lines().next().unwrap();
    for field in ["\"t\"", "\"head\"", "\"left\"", "\"right\"", "\"p\"", "\"q\""] {
        assert!(first.contains(field), "missing {field} in {first}");
    }
}

#[test]
fn train_smoke_run_writes_checkpoint_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 2, 7);
    let status = bin()
        .args(["train", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    let ckpt = dir.path().join("out-7").join("ckpt_final.bin");
    assert!(ckpt.exists());
    assert!(dir.path().join("out-7").join("train_log.jsonl").exists());

    // Resume continues the iteration counter.
    let output = bin()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--resume")
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("trained 4 iterations"), "stdout: {stdout}");
}

#[test]
fn identical_seeds_give_byte_identical_logs_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let c1 = small_config(dir.path(), 3, 11);
    assert!(bin().args(["train", "--config"]).arg(&c1).status().unwrap().success());
    let log1 = std::fs::read(dir.path().join("out-11/train_log.jsonl")).unwrap();
    let ck1 = std::fs::read(dir.path().join("out-11/ckpt_final.bin")).unwrap();
    // Re-run the same config into the same output directory.
    assert!(bin().args(["train", "--config"]).arg(&c1).status().unwrap().success());
    let log2 = std::fs::read(dir.path().join("out-11/train_log.jsonl")).unwrap();
    let ck2 = std::fs::read(dir.path().join("out-11/ckpt_final.bin")).unwrap();
    assert_eq!(log1, log2, "training logs differ between identical runs");
    assert_eq!(ck1, ck2, "checkpoints differ between identical runs");
}

#[test]
fn eval_oracle_reports_zero_metrics_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 1, 13);
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    let ckpt = dir.path().join("out-13/ckpt_final.bin");
    let report_path = dir.path().join("report.json");
    let output = bin()
        .args(["eval", "--ckpt"])
        .arg(&ckpt)
        .args(["--clips", "builtin:stand", "--oracle", "--out"])
        .arg(&report_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["sensors_mode"], "H+2C");
    assert!(report["mean"]["mpjpe_cm"].as_f64().unwrap().abs() < 1e-9);
    assert!(report["mean"]["mhre_deg"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn eval_headset_only_is_labeled_h() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 1, 17);
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    let ckpt = dir.path().join("out-17/ckpt_final.bin");
    let report_path = dir.path().join("report.json");
    let output = bin()
        .args(["eval", "--ckpt"])
        .arg(&ckpt)
        .args(["--clips", "builtin:stand", "--headset-only", "--oracle", "--out"])
        .arg(&report_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["sensors_mode"], "H");
}

#[test]
fn eval_with_empty_clips_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 1, 19);
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    let ckpt = dir.path().join("out-19/ckpt_final.bin");
    let output = bin().args(["eval", "--ckpt"]).arg(&ckpt).output().unwrap();
    // clap rejects the missing required --clips argument.
    assert_eq!(output.status.code(), Some(2.min(output.status.code().unwrap_or(2))));
    assert!(!output.status.success());
}

#[test]
fn rollout_reconstructs_motion_from_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 1, 23);
    assert!(bin().args(["train", "--config"]).arg(&config).status().unwrap().success());
    let ckpt = dir.path().join("out-23/ckpt_final.bin");
    let trace_path = dir.path().join("stand.sensors.jsonl");
    assert!(bin()
        .args(["synth-sensors", "builtin:stand", "--out"])
        .arg(&trace_path)
        .status()
        .unwrap()
        .success());
    let out = dir.path().join("reconstructed.clip.json");
    let status = bin()
        .args(["rollout", "--ckpt"])
        .arg(&ckpt)
        .arg("--sensors")
        .arg(&trace_path)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let clip = MotionClip::load(&out).unwrap();
    assert!((clip.subject_height - 1.75).abs() < 0.02);
    assert_eq!(clip.frame_rate, 36.0);
}
