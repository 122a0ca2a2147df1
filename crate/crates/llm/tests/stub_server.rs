use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use ambig_core::metrics::EvalRecord;
use ambig_core::prompts::{Catalog, PromptContext, TemplateId};
use ambig_llm::judge::{external_score, gpt_judge, mean_score};
use ambig_llm::runner::records_from_jsonl;
use ambig_llm::{
    complete, estimate_tokens, run_strategy, BackendError, FnBackend, GenerationConfig,
    HttpBackend, MockBackend, MockFallback, RetryPolicy, RunError, RunItem, RunOptions,
};
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

#[derive(Default)]
struct Stub {
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    calls: AtomicUsize,
    max_tokens_seen: AtomicUsize,
    bodies: Mutex<Vec<Value>>,
    status: Mutex<Option<StatusCode>>,
    fail_first: AtomicUsize,
}

/// Replies with the last line of the last user message, reversed into
/// `echo:<text>`, after a latency derived from the text.
async fn chat(State(s): State<Arc<Stub>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    s.calls.fetch_add(1, Ordering::SeqCst);
    if let Some(code) = *s.status.lock().unwrap() {
        return (code, Json(json!({"error": "stubbed"})));
    }
    if s.fail_first
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
    {
        return (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({"error": "busy"})),
        );
    }
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let messages = body["messages"].as_array().unwrap();
    let tokens: usize = messages
        .iter()
        .map(|m| estimate_tokens(m["content"].as_str().unwrap()))
        .sum();
    s.max_tokens_seen.fetch_max(tokens, Ordering::SeqCst);
    let last = messages.last().unwrap()["content"].as_str().unwrap();
    let line = last.lines().last().unwrap_or("").to_string();
    let delay = line.bytes().map(u64::from).sum::<u64>() % 23;
    tokio::time::sleep(Duration::from_millis(delay)).await;
    s.bodies.lock().unwrap().push(body.clone());
    s.in_flight.fetch_sub(1, Ordering::SeqCst);
    (
        StatusCode::OK,
        Json(
            json!({"choices": [{"message": {"role": "assistant", "content": format!("echo:{line}")}}]}),
        ),
    )
}

async fn score(Json(body): Json<Vec<Value>>) -> Json<Vec<f64>> {
    Json(
        body.iter()
            .map(|t| {
                if t["hypothesis"] == "perfect" {
                    1.0
                } else {
                    0.8512
                }
            })
            .collect(),
    )
}

async fn serve(stub: Arc<Stub>) -> SocketAddr {
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/score", post(score))
        .with_state(stub);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

fn http(addr: SocketAddr) -> HttpBackend {
    HttpBackend::new(
        &format!("http://{addr}/v1"),
        Some("test-key".into()),
        Duration::from_secs(5),
    )
    .unwrap()
}

fn items(n: usize) -> Vec<RunItem> {
    (1..=n)
        .map(|i| {
            let source = format!("sentence number {i} about power");
            RunItem {
                line_no: i,
                domain: "science".into(),
                source: source.clone(),
                reference: format!("ref {i}"),
                context: PromptContext {
                    source_sentence: source,
                    target_language: "Chinese".into(),
                    domain: Some("science".into()),
                    ..Default::default()
                },
            }
        })
        .collect()
}

#[tokio::test]
async fn http_backend_returns_stub_text() {
    let stub = Arc::new(Stub::default());
    let addr = serve(stub.clone()).await;
    let ctx = PromptContext {
        source_sentence: "Hello".into(),
        target_language: "Chinese".into(),
        ..Default::default()
    };
    let prompt = Catalog::builtin().render(TemplateId::T1, &ctx).unwrap();
    let ex = complete(
        &http(addr),
        &prompt,
        &GenerationConfig::default(),
        &RetryPolicy::none(),
    )
    .await
    .unwrap();
    assert_eq!(ex.response_text, "echo:Hello");
    assert_eq!(ex.attempt, 1);
    assert_eq!(ex.backend, "openai");
    let body = &stub.bodies.lock().unwrap()[0];
    assert_eq!(body["temperature"], 0.8);
    assert_eq!(body["top_p"], 0.95);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
}

#[tokio::test]
async fn order_preserved_and_parallelism_bounded() {
    let stub = Arc::new(Stub::default());
    let addr = serve(stub.clone()).await;
    let data = items(100);
    let mut opts = RunOptions::new(TemplateId::T5);
    opts.parallelism = 8;
    opts.generation.max_input_tokens = 60;
    opts.retry = RetryPolicy::immediate(3);
    let out = run_strategy(&http(addr), &Catalog::builtin(), &data, &opts)
        .await
        .unwrap();
    assert_eq!(
        out.iter().map(|r| r.line_no).collect::<Vec<_>>(),
        (1..=100).collect::<Vec<_>>()
    );
    for (r, it) in out.iter().zip(&data) {
        assert_eq!(r.hypothesis, format!("echo:{}", it.source));
        assert!(r.error.is_none());
    }
    let max = stub.max_in_flight.load(Ordering::SeqCst);
    assert!((1..=8).contains(&max), "max in flight {max}");
    assert!(stub.max_tokens_seen.load(Ordering::SeqCst) <= 60);
}

#[tokio::test]
async fn over_budget_never_reaches_server() {
    let stub = Arc::new(Stub::default());
    let addr = serve(stub.clone()).await;
    let mut opts = RunOptions::new(TemplateId::T1);
    opts.generation.max_input_tokens = 5;
    opts.max_failure_ratio = 1.0;
    let out = run_strategy(&http(addr), &Catalog::builtin(), &items(3), &opts)
        .await
        .unwrap();
    assert!(out.iter().all(|r| r
        .error
        .as_deref()
        .unwrap()
        .contains("max_input_tokens limit of 5")));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 0);
}

#[tokio::test]
async fn transient_errors_retried() {
    let stub = Arc::new(Stub::default());
    stub.fail_first.store(2, Ordering::SeqCst);
    let addr = serve(stub.clone()).await;
    let mut opts = RunOptions::new(TemplateId::T1);
    opts.retry = RetryPolicy::immediate(3);
    opts.parallelism = 1;
    let out = run_strategy(&http(addr), &Catalog::builtin(), &items(1), &opts)
        .await
        .unwrap();
    assert_eq!(out[0].exchanges[0].attempt, 3);
}

#[tokio::test]
async fn auth_failure_aborts_run() {
    let stub = Arc::new(Stub::default());
    *stub.status.lock().unwrap() = Some(StatusCode::UNAUTHORIZED);
    let addr = serve(stub.clone()).await;
    let mut opts = RunOptions::new(TemplateId::T1);
    opts.retry = RetryPolicy::immediate(3);
    let err = run_strategy(&http(addr), &Catalog::builtin(), &items(10), &opts)
        .await
        .unwrap_err();
    assert!(
        matches!(
            err,
            RunError::TooManyFailures {
                failed: 6,
                total: 10,
                ..
            }
        ),
        "{err}"
    );
    assert!(stub.calls.load(Ordering::SeqCst) <= 10);
}

#[tokio::test]
async fn mock_echo_and_reflection_shape() {
    let mock = MockBackend::default();
    let data = items(3);
    let out = run_strategy(
        &mock,
        &Catalog::builtin(),
        &data,
        &RunOptions::new(TemplateId::T1),
    )
    .await
    .unwrap();
    assert_eq!(
        out.iter().map(|r| r.hypothesis.clone()).collect::<Vec<_>>(),
        data.iter().map(|d| d.source.clone()).collect::<Vec<_>>()
    );

    let dict = BTreeMap::from([("power".to_string(), "能量".to_string())]);
    let mock = MockBackend::new(dict, MockFallback::Drop);
    for t in [TemplateId::T4, TemplateId::T10] {
        let out = run_strategy(&mock, &Catalog::builtin(), &data, &RunOptions::new(t))
            .await
            .unwrap();
        for r in &out {
            assert_eq!(r.exchanges.len(), 2);
            assert_eq!(r.exchanges[1].request.len(), 4);
            assert_eq!(r.exchanges[1].request[2].content, "能量");
            assert_eq!(r.hypothesis, "能量");
            assert_eq!(r.exchanges[0].latency_ms, 0);
        }
    }
}

#[tokio::test]
async fn resume_skips_completed_lines() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("run.jsonl.partial");
    let data = items(6);
    let mut opts = RunOptions::new(TemplateId::T1);
    opts.checkpoint = Some(ckpt.clone());

    let full = run_strategy(&MockBackend::default(), &Catalog::builtin(), &data, &opts)
        .await
        .unwrap();
    // Keep three completed lines and a torn write, as an interrupted run would.
    let content = std::fs::read_to_string(&ckpt).unwrap();
    let mut kept: String = content.lines().take(3).map(|l| format!("{l}\n")).collect();
    kept.push_str("{\"line_no\": 4, \"dom");
    std::fs::write(&ckpt, kept).unwrap();

    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let counting = FnBackend::new("mock", move |req| {
        c.fetch_add(1, Ordering::SeqCst);
        Ok(req.source.clone())
    });
    let resumed = run_strategy(&counting, &Catalog::builtin(), &data, &opts)
        .await
        .unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 3);
    assert_eq!(resumed, full);
    let (on_disk, bad) = records_from_jsonl(&std::fs::read_to_string(&ckpt).unwrap());
    assert!(bad.is_empty());
    assert_eq!(on_disk.len(), 6);
}

#[tokio::test]
async fn empty_dataset_rejected() {
    let err = run_strategy(
        &MockBackend::default(),
        &Catalog::builtin(),
        &[],
        &RunOptions::new(TemplateId::T1),
    )
    .await
    .unwrap_err();
    assert!(matches!(err, RunError::EmptyDataset));
}

fn eval(line_no: usize, hyp: &str) -> EvalRecord {
    EvalRecord {
        line_no,
        domain: "laws".into(),
        template: TemplateId::T1,
        source: "power".into(),
        reference: "权力".into(),
        hypothesis: hyp.into(),
        error: None,
    }
}

#[tokio::test]
async fn judge_protocol() {
    let judge = FnBackend::new("judge", |req| {
        let first = &req.messages[0].content;
        Ok(if first.contains("<good>") {
            "pairs: 3, correct: 2".into()
        } else if first.contains("<bad>") {
            "correct: 5, pairs: 3".into()
        } else if req.messages.len() == 1 {
            "Several ambiguous words.".into()
        } else if first.contains("<prose>") {
            "still no numbers".into()
        } else {
            "pairs: 1, correct: 1".into()
        })
    });
    let recs = [
        eval(1, "good"),
        eval(2, "bad"),
        eval(3, "prose"),
        eval(4, "late"),
    ];
    let (outcomes, summary) = gpt_judge(
        &judge,
        &recs,
        &GenerationConfig::default(),
        &RetryPolicy::none(),
        2,
    )
    .await;
    assert_eq!((outcomes[0].found, outcomes[0].correct), (Some(3), Some(2)));
    assert!(outcomes[1]
        .error
        .as_deref()
        .unwrap()
        .contains("5 correct out of 3"));
    assert!(outcomes[2]
        .error
        .as_deref()
        .unwrap()
        .contains("after reformat request"));
    assert_eq!((outcomes[3].found, outcomes[3].correct), (Some(1), Some(1)));
    assert_eq!((summary.found, summary.correct), (4, 3));
}

#[tokio::test]
async fn external_scorer_scaling() {
    let addr = serve(Arc::new(Stub::default())).await;
    let mut errored = eval(3, "");
    errored.error = Some("timeout".into());
    let recs = [eval(1, "a"), eval(2, "perfect"), errored];
    let scores = external_score(&recs, &format!("http://{addr}"), Duration::from_secs(5))
        .await
        .unwrap();
    assert!((scores[0].unwrap() - 85.12).abs() < 1e-9);
    assert_eq!(scores[1..], [Some(100.0), None]);
    let only = external_score(
        &recs[..1],
        &format!("http://{addr}"),
        Duration::from_secs(5),
    )
    .await
    .unwrap();
    assert!((mean_score(&only).unwrap() - 85.12).abs() < 1e-9);

    let down = external_score(&recs, "http://127.0.0.1:9", Duration::from_millis(500)).await;
    assert!(down.is_err());
}

#[test]
fn missing_credential_is_config_error() {
    std::env::remove_var("AMBIG_API_KEY");
    let err = HttpBackend::from_env(Duration::from_secs(1)).err().unwrap();
    assert!(matches!(err, BackendError::Config(ref m) if m.contains("AMBIG_API_KEY")));
}
