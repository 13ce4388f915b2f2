use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use tempfile::TempDir;

const TINY_TRAIN: &str = r#"
[train]
episodes = 6
hidden = [8]
warmup = 32
batch_size = 8
learning_rate = 0.01

[evaluate]
episodes = 2
"#;

fn crl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to launch crl")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is not JSON")
}

#[test]
fn verify_contraction_default_config_succeeds_quickly() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "empty.toml", "");
    let start = Instant::now();
    let out = crl(&["verify-contraction", s(&cfg), "--out", s(dir.path())]);
    assert!(start.elapsed() < Duration::from_secs(10));
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out)["holds"], true);
    let csv = fs::read_to_string(dir.path().join("certificate.csv")).unwrap();
    assert!(csv.starts_with("gamma,latency,mdp,trial,modulus,bound"));
}

#[test]
fn verify_contraction_accepts_undiscounted_boundary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g1.toml",
        "[contraction]\ngammas = [1.0]\ntrials = 50\n[contraction.refinement]\ngamma = 1.0\n",
    );
    let out = crl(&["verify-contraction", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn verify_contraction_rejects_sabotaged_operator() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "[contraction]\noperator = \"sabotaged\"\ngammas = [0.9]\nrefine = false\n",
    );
    let out = crl(&["verify-contraction", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma=0.9") && err.contains("trial="), "{err}");
}

#[test]
fn unknown_flags_and_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "");
    assert_eq!(
        crl(&["bench-env", s(&cfg), "--frobnicate"]).status.code(),
        Some(1)
    );
    let bad = write_config(dir.path(), "bad.toml", "[train]\nepisodez = 3\n");
    assert_eq!(
        crl(&["bench-env", s(&bad), "--out", s(dir.path())])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn train_writes_output_layout_and_evaluates_deterministically() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "t.toml", TINY_TRAIN);
    let out_dir = dir.path().join("run");
    let out = crl(&["train", s(&cfg), "--seed", "3", "--out", s(&out_dir)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(json(&out)["episodes"], 6);
    assert!(out_dir.join("records.csv").is_file());
    assert!(out_dir.join("curves/learning_curve.csv").is_file());
    assert!(out_dir.join("checkpoints/q.crlq").is_file());
    let records = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 2);

    let a = crl(&["evaluate", s(&cfg), "--seed", "5", "--out", s(&out_dir)]);
    let b = crl(&["evaluate", s(&cfg), "--seed", "5", "--out", s(&out_dir)]);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn concurrent_evaluation_is_shorter_than_blocking() {
    let dir = TempDir::new().unwrap();
    let base = format!(
        "{TINY_TRAIN}\n[wrapper]\nlatency_schedule = {{ kind = \"fixed\", latency = 0.05 }}\n"
    );
    let conc = write_config(dir.path(), "c.toml", &base);
    let block = write_config(
        dir.path(),
        "b.toml",
        &base.replace("[wrapper]\n", "[wrapper]\nexecution_mode = \"blocking\"\n"),
    );
    let out_dir = dir.path().join("run");
    assert_eq!(
        crl(&["train", s(&conc), "--out", s(&out_dir)])
            .status
            .code(),
        Some(0)
    );
    let ckpt = out_dir.join("checkpoints/q.crlq");
    let c = json(&crl(&[
        "evaluate",
        s(&conc),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out_dir),
    ]));
    let b = json(&crl(&[
        "evaluate",
        s(&block),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out_dir),
    ]));
    let cd = c["episode_sim_duration_s"].as_f64().unwrap();
    let bd = b["episode_sim_duration_s"].as_f64().unwrap();
    assert!(cd < bd, "concurrent {cd} vs blocking {bd}");
    assert!((cd - 10.0).abs() < 1e-9 && (bd - 15.0).abs() < 1e-9);
}

#[test]
fn corrupted_checkpoint_exits_with_contract_code() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "t.toml", TINY_TRAIN);
    let out_dir = dir.path().join("run");
    assert_eq!(
        crl(&["train", s(&cfg), "--out", s(&out_dir)]).status.code(),
        Some(0)
    );
    let ckpt = out_dir.join("checkpoints/q.crlq");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[12] ^= 0x40;
    fs::write(&ckpt, bytes).unwrap();
    let out = crl(&["evaluate", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CRC"));
}

#[test]
fn divergent_training_exits_with_code_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.toml",
        "[train]\nepisodes = 20\nwarmup = 32\nhidden = [16]\nlearning_rate = 1e100\n",
    );
    let out = crl(&["train", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_records_and_curves() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        r#"
[train]
episodes = 3
hidden = [8]
warmup = 16
batch_size = 8

[sweep]
seeds = [0, 1]
use_vtg = [false, true]
n_stack_states = [0]
n_action_bins = [3]
learning_rate = [0.01]
"#,
    );
    let out_dir = dir.path().join("sweep");
    let out = crl(&["sweep", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["ran"], 4);
    assert_eq!(v["arms"].as_array().unwrap().len(), 2);
    let records = fs::read_to_string(out_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 5);
    assert!(out_dir.join("curves/curves.csv").is_file());
    assert!(out_dir.join("curves/auc.csv").is_file());

    let again = json(&crl(&["sweep", s(&cfg), "--out", s(&out_dir)]));
    assert_eq!(again["ran"], 0);
    assert_eq!(again["skipped"], 4);
    assert_eq!(
        fs::read_to_string(out_dir.join("records.csv")).unwrap(),
        records
    );
}

#[test]
fn bench_env_reports_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "b.toml",
        "[bench]\nepisodes = 3\n[task]\nname = \"cartpole\"\n",
    );
    let out = crl(&["bench-env", s(&cfg), "--seed", "1", "--out", s(dir.path())]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert_eq!(v["task"], "cartpole");
    assert!(dir.path().join("bench.json").is_file());
}
