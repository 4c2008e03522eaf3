use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rewardsmith"));
    c.env("RUST_LOG", "warn");
    c
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/replay_trace.json")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn replay_config(out: &Path) -> Value {
    json!({
        "env": "pointmass_reach",
        "generator": { "kind": "replay", "fixture": fixture() },
        "evolution": { "iterations": 2, "samples": 3, "restarts": 1, "evaluator": "scripted" },
        "seed": 0,
        "out_dir": out,
    })
}

fn mock_config(out: &Path) -> Value {
    json!({
        "env": "pointmass_reach",
        "generator": { "kind": "mock" },
        "evolution": { "iterations": 3, "samples": 4, "restarts": 2 },
        "trainer": {
            "population": 32, "elite_fraction": 0.125, "generations": 12, "rollouts_per_candidate": 1,
            "checkpoints": 3, "noise_floor": 0.01, "seed": 0, "eval_episodes": 2, "time_budget_secs": null
        },
        "seed": 3,
        "out_dir": out,
    })
}

fn run_id_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).split_whitespace().next().unwrap().to_string()
}

#[test]
fn run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = tmp.path().join("runs");
    let cfg = write_config(tmp.path(), "trace.json", &replay_config(&runs));
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let id = run_id_of(&out);

    let out = bin().args(["report", &id, "--json", "--root"]).arg(&runs).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["runs"][0]["best_per_iteration"], json!([0.3, 0.4]));
    assert_eq!(doc["runs"][0]["eureka_best"]["score"], 0.4);

    let table = bin().args(["report", &id, "--compare", &id, "--root"]).arg(&runs).output().unwrap();
    let text = String::from_utf8_lossy(&table.stdout);
    assert!(text.contains("beats"), "{text}");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = replay_config(tmp.path());
    cfg["evolution"]["ablation"] = json!({ "no_evolution": { "total_samples": 32 } });
    let path = write_config(tmp.path(), "bad.json", &cfg);
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["run", "--config", "/nonexistent/config.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // hf needs a human-feedback config
    let path = write_config(tmp.path(), "auto.json", &replay_config(tmp.path()));
    let out = bin().args(["hf", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_generator_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "env": "pointmass_reach",
        "generator": { "kind": "llm", "model": "m", "api_base": "http://127.0.0.1:1/v1", "max_retries": 0 },
        "evolution": { "iterations": 1, "samples": 2, "restarts": 1 },
        "out_dir": tmp.path().join("runs"),
    });
    let path = write_config(tmp.path(), "llm.json", &cfg);
    let out = bin().args(["run", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn hf_run_starts_paused() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = mock_config(&tmp.path().join("runs"));
    cfg["evolution"] = json!({ "iterations": 2, "samples": 1, "restarts": 1, "mode": "human_feedback" });
    let path = write_config(tmp.path(), "hf.json", &cfg);
    let out = bin().args(["hf", "--config"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PausedForFeedback"));
}

fn record_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).map(|s| s.lines().count()).unwrap_or(0)
}

#[test]
fn killed_process_resumes_to_identical_record() {
    let tmp = tempfile::tempdir().unwrap();
    let reference_root = tmp.path().join("reference");
    let cfg = write_config(tmp.path(), "ref.json", &mock_config(&reference_root));
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let id = run_id_of(&out);
    let reference = std::fs::read(reference_root.join(&id).join("record.jsonl")).unwrap();
    let total = reference.iter().filter(|&&b| b == b'\n').count();

    let root = tmp.path().join("killed");
    let cfg = write_config(tmp.path(), "kill.json", &mock_config(&root));
    let record = root.join(&id).join("record.jsonl");
    let mut child = bin().args(["run", "--config"]).arg(&cfg).spawn().unwrap();
    let deadline = Instant::now() + Duration::from_secs(60);
    while record_lines(&record) < total / 3 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(2));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let at_kill = record_lines(&record);
    assert!(at_kill < total, "process finished before it could be killed");

    let out = bin().args(["resume", &id, "--root"]).arg(&root).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&record).unwrap(), reference);
}
