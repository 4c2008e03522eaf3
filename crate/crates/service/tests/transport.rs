use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use rewardsmith::transport::HttpChatTransport;
use rewardsmith_core::env::{EnvId, EnvironmentSpec};
use rewardsmith_core::evolution::{
    build_evaluator, run_search, GeneratorConfig, GeneratorKind, MemorySink, RunConfig, RunStatus,
};
use rewardsmith_core::generate::llm::{ChatRequest, ChatTransport, LlmGenerator, LlmSettings, TransportError};
use rewardsmith_core::generate::{propose, GeneratorContext};
use serde_json::{json, Value};

/// Canned replies: a list of (status, body) returned in order, the last repeating.
#[derive(Clone)]
struct Script {
    replies: Arc<Vec<(u16, Value)>>,
    calls: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<(Option<String>, Value)>>>,
}

async fn complete(State(s): State<Script>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    s.requests.lock().unwrap().push((auth, body));
    let i = s.calls.fetch_add(1, Ordering::SeqCst).min(s.replies.len() - 1);
    let (code, reply) = s.replies[i].clone();
    (StatusCode::from_u16(code).unwrap(), Json(reply))
}

fn chat_server(replies: Vec<(u16, Value)>) -> (String, Script) {
    let script = Script {
        replies: Arc::new(replies),
        calls: Arc::new(AtomicUsize::new(0)),
        requests: Arc::new(Mutex::new(Vec::new())),
    };
    let app = Router::new().route("/v1/chat/completions", post(complete)).with_state(script.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    (format!("http://{addr}/v1"), script)
}

fn choices(texts: &[&str]) -> Value {
    json!({ "choices": texts.iter().map(|t| json!({ "index": 0, "message": { "role": "assistant", "content": t } })).collect::<Vec<_>>() })
}

fn request(n: usize) -> ChatRequest {
    ChatRequest {
        model: "test-model".into(),
        messages: vec![],
        temperature: 1.0,
        n,
    }
}

#[test]
fn sends_openai_shaped_request() {
    let (base, script) = chat_server(vec![(200, choices(&["a = -dist", "b = -dist"]))]);
    let t = HttpChatTransport::new(&base, Some("secret".into()), Duration::from_secs(5)).unwrap();
    assert_eq!(t.complete(&request(2)).unwrap(), vec!["a = -dist", "b = -dist"]);
    let (auth, body) = script.requests.lock().unwrap()[0].clone();
    assert_eq!(auth.as_deref(), Some("Bearer secret"));
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["n"], 2);
}

#[test]
fn classifies_errors() {
    let (base, _) = chat_server(vec![(503, json!({"error": "busy"}))]);
    let t = HttpChatTransport::new(&base, None, Duration::from_secs(5)).unwrap();
    assert!(matches!(t.complete(&request(1)), Err(TransportError::Transient(_))));

    let (base, _) = chat_server(vec![(401, json!({"error": "bad key"}))]);
    let t = HttpChatTransport::new(&base, None, Duration::from_secs(5)).unwrap();
    assert!(matches!(t.complete(&request(1)), Err(TransportError::Fatal(_))));

    let t = HttpChatTransport::new("http://127.0.0.1:1/v1", None, Duration::from_secs(2)).unwrap();
    assert!(matches!(t.complete(&request(1)), Err(TransportError::Transient(_))));
}

#[test]
fn generator_retries_and_tops_up() {
    let (base, script) = chat_server(vec![
        (500, json!({})),
        (200, choices(&["```\na = -dist\n```"])),
        (200, choices(&["```\nb = -2 * dist\n```", "```\nc = -3 * dist\n```"])),
    ]);
    let t = HttpChatTransport::new(&base, None, Duration::from_secs(5)).unwrap();
    let mut g = LlmGenerator::new(t, LlmSettings::default()).with_sleep(|_| {});
    let spec = EnvironmentSpec::builtin(EnvId::PointmassReach);
    let ctx = GeneratorContext::initial(&spec, 0);
    let proposals = propose(&mut g, &ctx, 3, 1.0).unwrap();
    assert_eq!(proposals.len(), 3);
    assert!(proposals.iter().all(|p| p.program().is_some()));
    let requests = script.requests.lock().unwrap();
    assert_eq!(requests.len(), 3);
    assert_eq!(requests[2].1["n"], 2);
    let user = requests[0].1["messages"][1]["content"].as_str().unwrap();
    assert!(user.contains("Task description:"));
}

#[test]
fn transport_failure_fails_the_run_with_exit_code_3() {
    let (base, _) = chat_server(vec![(401, json!({"error": "bad key"}))]);
    let mut generator = GeneratorConfig::of_kind(GeneratorKind::Llm);
    generator.model = Some("test-model".into());
    generator.api_base = Some(base);
    let mut cfg = RunConfig::new(EnvId::PointmassReach, generator);
    cfg.evolution.iterations = 1;
    cfg.evolution.samples = 2;
    cfg.evolution.restarts = 1;
    let mut g = rewardsmith::make_generator(&cfg).unwrap();
    let evaluator = build_evaluator(&cfg).unwrap();
    let mut sink = MemorySink::default();
    let err = run_search(&cfg, g.as_mut(), evaluator.as_ref(), &mut sink).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let record = rewardsmith_core::evolution::RunRecord::replay(cfg.run_id(), cfg, &sink.events).unwrap();
    assert_eq!(record.status, RunStatus::Failed);
}
