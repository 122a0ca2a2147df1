use std::collections::BTreeMap;
use std::sync::Arc;

use ambig_annotate::{load_state, router, JudgmentSink, ServiceFiles, ServiceState, SharedState};
use ambig_core::ambiguity::build_ambiguous_vocabulary;
use ambig_core::annotation::{
    items_to_jsonl, read_journal, AnnotationError, ItemStatus, Judgment, JudgmentStore, ReviewItem,
};
use ambig_core::lexicon::DomainLexicon;
use ambig_core::Execution;
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower::ServiceExt;

fn item(id: &str, domain: &str, source: &str, target: &str) -> ReviewItem {
    ReviewItem {
        item_id: id.into(),
        domain: domain.into(),
        source_word: source.into(),
        target_word: target.into(),
        examples: vec![1],
        status: ItemStatus::Pending,
    }
}

fn items() -> Vec<ReviewItem> {
    vec![
        item("law-00000", "law", "power", "权力"),
        item("law-00001", "law", "power", "系统"),
        item("law-00002", "law", "court", "法院"),
        item("science-00000", "science", "power", "能量"),
    ]
}

fn lex(domain: &str, pairs: &[(&str, &str)]) -> DomainLexicon {
    let mut l = DomainLexicon::new(domain);
    for (s, t) in pairs {
        l.add(s, t, 3);
    }
    l
}

fn state_with(sink: Option<Box<dyn JudgmentSink>>) -> SharedState {
    let mut st = ServiceState::new(JudgmentStore::new(items()).unwrap(), sink);
    st.lexicons = BTreeMap::from([
        (
            "law".to_string(),
            lex(
                "law",
                &[("power", "权力"), ("power", "系统"), ("court", "法院")],
            ),
        ),
        (
            "science".to_string(),
            lex("science", &[("power", "能量"), ("power", "系统")]),
        ),
    ]);
    st.vocab = build_ambiguous_vocabulary(&st.lexicons, Execution::Sequential).unwrap();
    Arc::new(RwLock::new(st))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

fn judge(id: &str, label: &str) -> Value {
    json!({"item_id": id, "label": label, "annotator": "a1"})
}

#[tokio::test]
async fn queue_filters() {
    let app = router(state_with(None));
    let (s, v) = call(&app, "GET", "/queue", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 4);
    let (_, v) = call(&app, "GET", "/queue?domain=science", None).await;
    assert_eq!(v.as_array().unwrap().len(), 1);
    call(
        &app,
        "POST",
        "/judgments",
        Some(judge("law-00000", "correct")),
    )
    .await;
    let (_, v) = call(&app, "GET", "/queue?domain=law&status=pending", None).await;
    assert_eq!(v.as_array().unwrap().len(), 2);
    let (_, v) = call(&app, "GET", "/queue?status=judged", None).await;
    assert_eq!(v[0]["item_id"], "law-00000");
    let (s, _) = call(&app, "GET", "/queue?status=done", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn labels_update_accuracy() {
    let app = router(state_with(None));
    for (id, label) in [
        ("law-00000", "correct"),
        ("law-00001", "partially_correct"),
        ("law-00002", "incorrect"),
    ] {
        let (s, v) = call(&app, "POST", "/judgments", Some(judge(id, label))).await;
        assert_eq!(s, StatusCode::CREATED);
        assert_eq!(v["label"], label);
    }
    let (_, v) = call(&app, "GET", "/accuracy", None).await;
    let law = &v["domains"]["law"];
    assert_eq!(
        (
            law["correct"].as_u64(),
            law["partially_correct"].as_u64(),
            law["incorrect"].as_u64()
        ),
        (Some(1), Some(1), Some(1))
    );
    assert_eq!(law["percentages"]["correct"], 33);
    let sum: f64 = ["correct", "partially_correct", "incorrect"]
        .iter()
        .map(|k| law["proportions"][*k].as_f64().unwrap())
        .sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(v["domains"].get("science").is_none());

    // Re-judging replaces the earlier label.
    call(
        &app,
        "POST",
        "/judgments",
        Some(judge("law-00001", "correct")),
    )
    .await;
    let (_, v) = call(&app, "GET", "/accuracy", None).await;
    assert_eq!(v["domains"]["law"]["correct"], 2);
    assert_eq!(v["domains"]["law"]["percentages"]["correct"], 67);
}

#[tokio::test]
async fn bad_judgments_rejected() {
    let app = router(state_with(None));
    let (s, v) = call(&app, "POST", "/judgments", Some(judge("law-00000", "ok"))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("unknown label"));
    let (s, _) = call(&app, "POST", "/judgments", Some(judge("nope", "correct"))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(
        &app,
        "POST",
        "/judgments",
        Some(json!({"item_id": "law-00000", "label": "correct", "annotator": " "})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
}

struct FailingSink;

impl JudgmentSink for FailingSink {
    fn append(&mut self, _: &Judgment) -> Result<(), AnnotationError> {
        Err(AnnotationError::Io(std::io::Error::other("disk full")))
    }
}

#[tokio::test]
async fn failed_journal_write_changes_nothing() {
    let app = router(state_with(Some(Box::new(FailingSink))));
    let (s, v) = call(
        &app,
        "POST",
        "/judgments",
        Some(judge("law-00000", "correct")),
    )
    .await;
    assert_eq!(s, StatusCode::INTERNAL_SERVER_ERROR);
    assert!(v["error"].as_str().unwrap().contains("disk full"));
    let (_, v) = call(&app, "GET", "/queue?status=judged", None).await;
    assert!(v.as_array().unwrap().is_empty());
    let (_, v) = call(&app, "GET", "/accuracy", None).await;
    assert!(v["domains"].as_object().unwrap().is_empty());
}

#[tokio::test]
async fn refinements_apply_to_vocab() {
    let app = router(state_with(None));
    let (_, before) = call(&app, "GET", "/vocab/science", None).await;
    assert_eq!(before["entries"][0]["source"], "power");
    // Judge the law translation 系统 incorrect: it is dropped from the law
    // lexicon and no longer counts as a law-origin distractor for science.
    call(
        &app,
        "POST",
        "/judgments",
        Some(judge("law-00001", "incorrect")),
    )
    .await;
    call(
        &app,
        "POST",
        "/judgments",
        Some(judge("law-00000", "partially_correct")),
    )
    .await;
    let (s, rep) = call(&app, "POST", "/refinements/apply", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(rep["removed"], 1);
    assert_eq!(rep["flagged"], json!(["law-00000"]));
    let (_, law) = call(&app, "GET", "/vocab/law", None).await;
    let in_domain = &law["entries"][0]["in_domain"];
    assert_eq!(in_domain, &json!(["权力"]));
    let (_, sci) = call(&app, "GET", "/vocab/science", None).await;
    let distractors: Vec<&str> = sci["entries"][0]["distractors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|d| d["word"].as_str().unwrap())
        .collect();
    assert_eq!(distractors, ["权力"]);
    let (s, _) = call(&app, "GET", "/vocab/medical", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn journal_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let files = ServiceFiles {
        items: dir.path().join("items.jsonl"),
        journal: dir.path().join("journal.jsonl"),
        ..Default::default()
    };
    std::fs::write(&files.items, items_to_jsonl(&items())).unwrap();
    {
        let (st, _) = load_state(&files, Default::default()).unwrap();
        let app = router(Arc::new(RwLock::new(st)));
        call(
            &app,
            "POST",
            "/judgments",
            Some(judge("law-00000", "correct")),
        )
        .await;
        call(
            &app,
            "POST",
            "/judgments",
            Some(judge("law-00000", "incorrect")),
        )
        .await;
        call(
            &app,
            "POST",
            "/judgments",
            Some(judge("science-00000", "correct")),
        )
        .await;
    }
    let events = read_journal(&files.journal).unwrap();
    assert_eq!(events.len(), 3);
    let (st, warnings) = load_state(&files, Default::default()).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(st.store.history().len(), 3);
    let app = router(Arc::new(RwLock::new(st)));
    let (_, v) = call(&app, "GET", "/accuracy", None).await;
    assert_eq!(v["domains"]["law"]["incorrect"], 1);
    assert_eq!(v["domains"]["science"]["correct"], 1);
}
