use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use rewardsmith::api::{router, AppState};
use rewardsmith_core::env::EnvId;
use rewardsmith_core::evolution::{
    build_evaluator, build_generator, run_search, GeneratorConfig, GeneratorKind, Mode, RunConfig,
};
use rewardsmith_core::policy::TrainerConfig;
use rewardsmith_core::store::RunStore;
use serde_json::{json, Value};

fn tiny_trainer() -> TrainerConfig {
    TrainerConfig {
        population: 16,
        generations: 4,
        rollouts_per_candidate: 1,
        checkpoints: 2,
        eval_episodes: 2,
        time_budget_secs: None,
        ..TrainerConfig::default()
    }
}

fn hf_config(iterations: usize) -> RunConfig {
    let mut cfg = RunConfig::new(EnvId::PointmassReach, GeneratorConfig::of_kind(GeneratorKind::Mock));
    cfg.evolution.iterations = iterations;
    cfg.evolution.samples = 1;
    cfg.evolution.restarts = 1;
    cfg.evolution.mode = Mode::HumanFeedback;
    cfg.trainer = tiny_trainer();
    cfg
}

fn auto_config() -> RunConfig {
    let mut cfg = RunConfig::new(EnvId::PointmassReach, GeneratorConfig::of_kind(GeneratorKind::Mock));
    cfg.evolution.iterations = 2;
    cfg.evolution.samples = 2;
    cfg.evolution.restarts = 1;
    cfg.trainer = tiny_trainer();
    cfg
}

fn start_run(store: &RunStore, cfg: &RunConfig) -> String {
    let mut writer = store.create(cfg).unwrap();
    let mut g = build_generator(cfg, None).unwrap();
    let e = build_evaluator(cfg).unwrap();
    run_search(cfg, g.as_mut(), e.as_ref(), &mut writer).unwrap();
    cfg.run_id()
}

struct Server {
    base: String,
    client: reqwest::Client,
    _dir: tempfile::TempDir,
    store: RunStore,
}

async fn server() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    let state = AppState::with_generators(store.clone(), Arc::new(|cfg: &RunConfig| build_generator(cfg, None)));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        _dir: dir,
        store,
    }
}

impl Server {
    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let resp = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = resp.status();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    async fn post_feedback(&self, id: &str, text: &str) -> StatusCode {
        self.client
            .post(format!("{}/api/runs/{id}/feedback", self.base))
            .json(&json!({ "text": text }))
            .send()
            .await
            .unwrap()
            .status()
    }

    /// Wait until the run reports `status`.
    async fn wait_for(&self, id: &str, status: &str) -> Value {
        for _ in 0..600 {
            let (_, body) = self.get(&format!("/api/runs/{id}")).await;
            if body["status"] == status {
                return body;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        panic!("run {id} never reached {status}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn lists_and_summarizes_runs() {
    let s = server().await;
    let id = start_run(&s.store, &auto_config());
    let (status, list) = s.get("/api/runs").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list[0]["run_id"], id.as_str());
    assert_eq!(list[0]["status"], "finished");

    let (status, summary) = s.get(&format!("/api/runs/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["best_so_far"].as_array().unwrap().len(), 2);
    assert_eq!(summary["iterations"].as_array().unwrap().len(), 2);

    let (status, it) = s.get(&format!("/api/runs/{id}/iterations/1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(it["candidates"].as_array().unwrap().len(), 2);
    assert!(it["prompt"]["user"].as_str().unwrap().contains("Feedback on that program:"));
    let (status, _) = s.get(&format!("/api/runs/{id}/iterations/7")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_run_is_404() {
    let s = server().await;
    assert_eq!(s.get("/api/runs/nope").await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.get("/api/runs/nope/events?since=0&timeout_ms=10").await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.post_feedback("nope", "x").await, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn events_tail_in_order() {
    let s = server().await;
    let id = start_run(&s.store, &auto_config());
    let (_, page) = s.get(&format!("/api/runs/{id}/events?since=0")).await;
    let seqs: Vec<u64> = page["events"].as_array().unwrap().iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    let (_, tail) = s.get(&format!("/api/runs/{id}/events?since=5")).await;
    assert_eq!(tail["events"][0]["seq"], 6);
    assert_eq!(tail["events"].as_array().unwrap().len(), seqs.len() - 5);
    assert_eq!(tail["events"][0]["event"]["type"], page["events"][5]["event"]["type"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn feedback_state_machine() {
    let s = server().await;
    let id = start_run(&s.store, &hf_config(2));
    let summary = s.wait_for(&id, "paused_for_feedback").await;
    assert_eq!(summary["awaiting_feedback_for"], 0);

    // an idle tail times out with no events
    let (_, idle) = s.get(&format!("/api/runs/{id}/events?since={}&timeout_ms=200", summary["last_seq"])).await;
    assert!(idle["events"].as_array().unwrap().is_empty());

    // the long poll wakes when the feedback round starts writing
    let last = summary["last_seq"].as_u64().unwrap();
    let poll = {
        let client = s.client.clone();
        let url = format!("{}/api/runs/{id}/events?since={last}&timeout_ms=30000", s.base);
        tokio::spawn(async move { client.get(url).send().await.unwrap().json::<Value>().await.unwrap() })
    };
    tokio::time::sleep(Duration::from_millis(150)).await;
    assert_eq!(s.post_feedback(&id, "reach the goal quickly").await, StatusCode::ACCEPTED);
    assert_eq!(s.post_feedback(&id, "second post").await, StatusCode::CONFLICT);
    let woke = poll.await.unwrap();
    assert_eq!(woke["events"][0]["event"]["type"], "feedback_attached");
    assert_eq!(woke["events"][0]["event"]["text"], "reach the goal quickly");

    s.wait_for(&id, "paused_for_feedback").await;
    let (_, round) = s.get(&format!("/api/runs/{id}/iterations/0")).await;
    assert_eq!(round["human_feedback"], "reach the goal quickly");
    assert_eq!(round["candidates"].as_array().unwrap().len(), 1);

    assert_eq!(s.post_feedback(&id, "make it slower and more stable").await, StatusCode::ACCEPTED);
    let done = s.wait_for(&id, "finished").await;
    assert_eq!(done["candidates"], 2);
    let (_, round) = s.get(&format!("/api/runs/{id}/iterations/1")).await;
    assert!(round["prompt"]["user"].as_str().unwrap().contains("make it slower and more stable"));
    assert_eq!(s.post_feedback(&id, "more").await, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_feedback_is_rejected() {
    let s = server().await;
    let id = start_run(&s.store, &hf_config(1));
    let url = format!("{}/api/runs/{id}/feedback", s.base);
    let bad_json = s
        .client
        .post(&url)
        .header("content-type", "application/json")
        .body("{\"text\": ")
        .send()
        .await
        .unwrap();
    assert_eq!(bad_json.status(), StatusCode::BAD_REQUEST);
    let wrong_shape = s.client.post(&url).json(&json!({ "message": "hi" })).send().await.unwrap();
    assert_eq!(wrong_shape.status(), StatusCode::BAD_REQUEST);
    let empty = s.client.post(&url).json(&json!({ "text": "  " })).send().await.unwrap();
    assert_eq!(empty.status(), StatusCode::BAD_REQUEST);
    let plain = s.client.post(&url).body("{\"text\": \"hi\"}").send().await.unwrap();
    assert_eq!(plain.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);
    // none of these touched the run
    let (_, summary) = s.get(&format!("/api/runs/{id}")).await;
    assert_eq!(summary["status"], "paused_for_feedback");
}

#[tokio::test(flavor = "multi_thread")]
async fn feedback_on_finished_run_is_409() {
    let s = server().await;
    let id = start_run(&s.store, &auto_config());
    assert_eq!(s.post_feedback(&id, "faster").await, StatusCode::CONFLICT);
}
