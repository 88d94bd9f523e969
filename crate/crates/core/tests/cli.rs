//! End-to-end exercise of the command-line surface on a tiny dataset:
//! gen -> pretrain -> distill -> eval -> sweep -> curve -> dump, plus the
//! documented exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_faultmeta")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn faultmeta")
}

fn tiny_config_json() -> String {
    serde_json::json!({
        "seed": 19,
        "corpus": {
            "motor": { "sample_rate_hz": 1000.0 },
            "n": 16,
            "stride": 256,
            "signals_per_pool": 3,
            "windows_per_signal": 16
        },
        "task_samples": 90,
        "train": {
            "backbone": { "blocks": 2, "channels": 8 },
            "batch_size": 16,
            "batches_per_epoch": 2,
            "pretrain_epochs": 6,
            "distill_epochs": 4,
            "lr_start": 1e-3,
            "lr_end": 1e-2
        },
        "eval": {
            "k_shots": [1, 5],
            "episodes": 8,
            "q_per_class": 3
        }
    })
    .to_string()
}

struct Workspace {
    root: PathBuf,
}

impl Workspace {
    fn new(tag: &str) -> Self {
        let root = std::env::temp_dir().join(format!("fm_cli_{tag}_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&root);
        std::fs::create_dir_all(&root).unwrap();
        Workspace { root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.root);
    }
}

#[test]
fn full_cli_flow() {
    let ws = Workspace::new("flow");
    let cfg_path = ws.path("config.json");
    std::fs::write(&cfg_path, tiny_config_json()).unwrap();
    let cfg = ws.s("config.json");
    let data = ws.s("data");

    // gen
    let out = run(&["gen", "--config", &cfg, "--out", &data]);
    assert!(out.status.success(), "gen failed: {}", String::from_utf8_lossy(&out.stderr));
    for id in 0..9 {
        let dir = ws.path(&format!("data/task_{id}"));
        assert!(dir.join("manifest.json").exists(), "missing manifest for task {id}");
        assert!(dir.join("healthy.csv").exists());
    }

    // pretrain
    let ck = ws.s("pre.ck");
    let out = run(&["pretrain", "--config", &cfg, "--data", &data, "--out", &ck]);
    assert!(out.status.success(), "pretrain failed: {}", String::from_utf8_lossy(&out.stderr));
    assert!(ws.path("pre.ck").exists());
    assert!(ws.path("pre.log.csv").exists());
    assert!(ws.path("pre.manifest.json").exists());
    let log = std::fs::read_to_string(ws.path("pre.log.csv")).unwrap();
    assert!(log.starts_with("epoch,loss,acc,lr"));
    assert_eq!(log.lines().count(), 1 + 6, "one row per epoch");

    // distill
    let ck2 = ws.s("student.ck");
    let out = run(&[
        "distill", "--config", &cfg, "--data", &data, "--teacher", &ck, "--out", &ck2,
    ]);
    assert!(out.status.success(), "distill failed: {}", String::from_utf8_lossy(&out.stderr));

    // eval with replay
    let report_path = ws.s("report.json");
    let replay_path = ws.s("replay.json");
    let out = run(&[
        "eval", "--config", &cfg, "--data", &data, "--checkpoint", &ck2, "--k-shot", "5",
        "--episodes", "6", "--out", &report_path, "--replay", &replay_path,
    ]);
    assert!(out.status.success(), "eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["k_shot"], 5);
    assert_eq!(report["episodes"], 6);
    assert_eq!(report["task_ids"], serde_json::json!([4]));
    assert!(ws.path("report.confusion.csv").exists());
    let replay: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&replay_path).unwrap()).unwrap();
    assert_eq!(replay.as_array().unwrap().len(), 6);

    // eval on a merged task combination
    let out = run(&[
        "eval", "--config", &cfg, "--data", &data, "--checkpoint", &ck2, "--task", "4,8",
        "--k-shot", "1", "--episodes", "4",
    ]);
    assert!(out.status.success(), "combo eval failed: {}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["task_ids"], serde_json::json!([4, 8]));

    // sweep (clean + 2/4/6 dB rows)
    let sweep_path = ws.s("sweep.json");
    let out = run(&[
        "sweep", "--config", &cfg, "--data", &data, "--checkpoint", &ck2, "--episodes", "4",
        "--k-shot", "2", "--out", &sweep_path,
    ]);
    assert!(out.status.success(), "sweep failed: {}", String::from_utf8_lossy(&out.stderr));
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sweep_path).unwrap()).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["per_snr"][0]["label"], "clean");
    assert_eq!(rows[1]["per_snr"][0]["label"], "2 dB");

    // curve
    let out = run(&[
        "curve", "--config", &cfg, "--data", &data, "--checkpoint", &ck2, "--episodes", "4",
        "--max-steps", "3",
    ]);
    assert!(out.status.success(), "curve failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("steps,accuracy,ci95"));
    assert_eq!(text.trim().lines().count(), 1 + 4, "0..=3 steps");

    // dump
    let out = run(&[
        "dump", "--config", &cfg, "--data", &data, "--checkpoint", &ck2, "--count", "7",
    ]);
    assert!(out.status.success(), "dump failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let mut lines = text.trim().lines();
    let header = lines.next().unwrap();
    assert!(header.ends_with(",label"));
    // 2 blocks on 16x16 with 8 channels: d = 8 * (16/4)^2 = 128, plus label
    assert_eq!(header.split(',').count(), 129);
    assert_eq!(lines.count(), 7);
}

#[test]
fn exit_codes() {
    // unknown flag -> usage + exit 1
    let out = run(&["eval", "--nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("USAGE"));

    // unknown subcommand -> exit 1
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));

    // eval without a checkpoint -> exit 1 with message
    let out = run(&["eval", "--data", "/nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));

    // missing data dir -> runtime io error -> exit 2
    let ws = Workspace::new("codes");
    let ck = ws.s("missing.ck");
    std::fs::write(Path::new(&ck), b"not a checkpoint").unwrap();
    let out = run(&["eval", "--data", "/nonexistent_dir_xyz", "--checkpoint", &ck]);
    assert_eq!(out.status.code(), Some(2));

    // config subcommand prints defaults including the table values
    let out = run(&["config"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("\"clip_norm\": 5.62"));
    assert!(text.contains("1464.0"));
}
