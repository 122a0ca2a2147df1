//! Review service: a queue of sampled word pairs, judgment intake backed by
//! a JSON-lines journal, live alignment-accuracy tables and application of
//! the resulting refinements to lexicons and ambiguous vocabularies.
//!
//! Writes go through one lock, so journal order is the order in which the
//! store saw judgments. A judgment is journaled before it is applied; if the
//! journal write fails the store is left untouched.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ambig_core::ambiguity::AmbiguousVocabulary;
use ambig_core::annotation::{
    alignment_accuracy, apply_refinements, items_from_jsonl, plan_refinements, read_journal,
    replay, Adjudication, AnnotationError, ItemStatus, Journal, Judgment, JudgmentStore, Label,
    RefinementAction, RefinementKind,
};
use ambig_core::lexicon::{from_tsv, to_tsv, DomainLexicon};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::sync::RwLock;

/// Where accepted judgments are persisted before they take effect.
pub trait JudgmentSink: Send + Sync {
    fn append(&mut self, j: &Judgment) -> Result<(), AnnotationError>;
}

impl JudgmentSink for Journal {
    fn append(&mut self, j: &Judgment) -> Result<(), AnnotationError> {
        Journal::append(self, j)
    }
}

pub struct ServiceState {
    pub store: JudgmentStore,
    pub adjudication: Adjudication,
    pub lexicons: BTreeMap<String, DomainLexicon>,
    pub vocab: BTreeMap<String, AmbiguousVocabulary>,
    /// Refined lexicons and vocabularies are written here when set.
    pub refined_dir: Option<PathBuf>,
    sink: Option<Box<dyn JudgmentSink>>,
}

impl ServiceState {
    pub fn new(store: JudgmentStore, sink: Option<Box<dyn JudgmentSink>>) -> Self {
        ServiceState {
            store,
            adjudication: Adjudication::default(),
            lexicons: BTreeMap::new(),
            vocab: BTreeMap::new(),
            refined_dir: None,
            sink,
        }
    }
}

pub type SharedState = Arc<RwLock<ServiceState>>;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|e| LoadError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Files backing a service instance.
#[derive(Debug, Clone, Default)]
pub struct ServiceFiles {
    pub items: PathBuf,
    pub journal: PathBuf,
    /// A lexicon TSV (all domains) to refine.
    pub lexicon: Option<PathBuf>,
    /// Ambiguous vocabulary JSON files, one per domain.
    pub vocab: Vec<PathBuf>,
    pub refined_dir: Option<PathBuf>,
}

/// Loads the queue, replays the journal and opens it for appending.
/// Returns the state and replay warnings.
pub fn load_state(
    files: &ServiceFiles,
    adjudication: Adjudication,
) -> Result<(ServiceState, Vec<String>), LoadError> {
    let items = items_from_jsonl(&read(&files.items)?).map_err(|e| LoadError::File {
        path: files.items.clone(),
        message: e.to_string(),
    })?;
    let mut store = JudgmentStore::new(items)?;
    let (journal, events) = Journal::open(&files.journal)?;
    let warnings = replay(&mut store, events);
    let mut state = ServiceState::new(store, Some(Box::new(journal)));
    state.adjudication = adjudication;
    state.refined_dir = files.refined_dir.clone();
    if let Some(p) = &files.lexicon {
        state.lexicons = from_tsv(&read(p)?).map_err(|e| LoadError::File {
            path: p.clone(),
            message: e.to_string(),
        })?;
    }
    for p in &files.vocab {
        let v = AmbiguousVocabulary::from_json(&read(p)?).map_err(|e| LoadError::File {
            path: p.clone(),
            message: e.to_string(),
        })?;
        state.vocab.insert(v.domain.clone(), v);
    }
    Ok((state, warnings))
}

/// Replays a journal against an items file without opening it for writes.
pub fn offline_store(
    items: &Path,
    journal: &Path,
) -> Result<(JudgmentStore, Vec<String>), LoadError> {
    let items = items_from_jsonl(&read(items)?).map_err(|e| LoadError::File {
        path: items.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut store = JudgmentStore::new(items)?;
    let events = if journal.exists() {
        read_journal(journal)?
    } else {
        Vec::new()
    };
    let warnings = replay(&mut store, events);
    Ok((store, warnings))
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<AnnotationError> for ApiError {
    fn from(e: AnnotationError) -> Self {
        let status = match e {
            AnnotationError::UnknownItem(_) => StatusCode::NOT_FOUND,
            AnnotationError::UnknownLabel(_) | AnnotationError::EmptyAnnotator => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.to_string())
    }
}

#[derive(Deserialize)]
struct QueueQuery {
    domain: Option<String>,
    status: Option<String>,
}

async fn queue(
    State(s): State<SharedState>,
    Query(q): Query<QueueQuery>,
) -> Result<Response, ApiError> {
    let status = match q.status.as_deref().filter(|s| !s.is_empty()) {
        Some(st) => Some(
            st.parse::<ItemStatus>()
                .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e))?,
        ),
        None => None,
    };
    let domain = q.domain.as_deref().filter(|d| !d.is_empty());
    let state = s.read().await;
    Ok(Json(state.store.queue(domain, status)).into_response())
}

#[derive(Deserialize)]
struct JudgmentBody {
    item_id: String,
    label: String,
    annotator: String,
}

async fn post_judgment(
    State(s): State<SharedState>,
    Json(body): Json<JudgmentBody>,
) -> Result<Response, ApiError> {
    let label: Label = body.label.parse()?;
    if body.annotator.trim().is_empty() {
        return Err(AnnotationError::EmptyAnnotator.into());
    }
    let mut state = s.write().await;
    if state.store.item(&body.item_id).is_none() {
        return Err(AnnotationError::UnknownItem(body.item_id).into());
    }
    let judgment = Judgment {
        ts: Utc::now(),
        item_id: body.item_id,
        label,
        annotator: body.annotator,
    };
    if let Some(sink) = state.sink.as_mut() {
        sink.append(&judgment).map_err(|e| {
            tracing::error!(error = %e, "journal write failed");
            ApiError(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("judgment not saved: {e}"),
            )
        })?;
    }
    state.store.apply(judgment.clone())?;
    Ok((StatusCode::CREATED, Json(judgment)).into_response())
}

#[derive(Serialize)]
struct AccuracyEntry {
    correct: u64,
    partially_correct: u64,
    incorrect: u64,
    total: u64,
    proportions: Proportions,
    percentages: Percentages,
}

#[derive(Serialize)]
struct Proportions {
    correct: f64,
    partially_correct: f64,
    incorrect: f64,
}

#[derive(Serialize)]
struct Percentages {
    correct: u64,
    partially_correct: u64,
    incorrect: u64,
}

async fn accuracy(State(s): State<SharedState>) -> Response {
    let state = s.read().await;
    let (rows, warnings) = alignment_accuracy(&state.store.labels_by_domain(state.adjudication));
    let domains: BTreeMap<String, AccuracyEntry> = rows
        .into_iter()
        .map(|(d, r)| {
            let (c, p, i) = r.proportions();
            let (pc, pp, pi) = r.percentages();
            (
                d,
                AccuracyEntry {
                    correct: r.correct,
                    partially_correct: r.partially_correct,
                    incorrect: r.incorrect,
                    total: r.total(),
                    proportions: Proportions {
                        correct: c,
                        partially_correct: p,
                        incorrect: i,
                    },
                    percentages: Percentages {
                        correct: pc,
                        partially_correct: pp,
                        incorrect: pi,
                    },
                },
            )
        })
        .collect();
    Json(json!({ "domains": domains, "warnings": warnings })).into_response()
}

#[derive(Serialize)]
struct RefinementReport {
    actions: Vec<RefinementAction>,
    removed: usize,
    flagged: Vec<String>,
    warnings: Vec<String>,
}

async fn apply(State(s): State<SharedState>) -> Result<Response, ApiError> {
    let mut state = s.write().await;
    let plan = plan_refinements(&state.store, state.adjudication);
    let mut warnings = Vec::new();
    let lexicons: BTreeMap<String, DomainLexicon> = state
        .lexicons
        .iter()
        .map(|(d, l)| {
            let (out, w) = apply_refinements(l, &plan.actions);
            warnings.extend(w);
            (d.clone(), out)
        })
        .collect();
    let vocab: BTreeMap<String, AmbiguousVocabulary> = state
        .vocab
        .iter()
        .map(|(d, v)| {
            let (out, w) = apply_refinements(v, &plan.actions);
            warnings.extend(w);
            (d.clone(), out)
        })
        .collect();
    if let Some(dir) = &state.refined_dir {
        write_refined(dir, &lexicons, &vocab).map_err(|e| {
            ApiError(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("writing refined files: {e}"),
            )
        })?;
    }
    state.lexicons = lexicons;
    state.vocab = vocab;
    let removed = plan
        .actions
        .iter()
        .filter(|a| a.action == RefinementKind::Remove)
        .count();
    Ok(Json(RefinementReport {
        actions: plan.actions,
        removed,
        flagged: plan.flagged,
        warnings,
    })
    .into_response())
}

fn write_refined(
    dir: &Path,
    lexicons: &BTreeMap<String, DomainLexicon>,
    vocab: &BTreeMap<String, AmbiguousVocabulary>,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    if !lexicons.is_empty() {
        let tsv: String = lexicons.values().map(to_tsv).collect();
        std::fs::write(dir.join("lexicon.refined.tsv"), tsv)?;
    }
    for (d, v) in vocab {
        std::fs::write(dir.join(format!("{d}.vocab.refined.json")), v.to_json())?;
    }
    Ok(())
}

async fn vocab(
    State(s): State<SharedState>,
    UrlPath(domain): UrlPath<String>,
) -> Result<Response, ApiError> {
    let state = s.read().await;
    let v = state.vocab.get(&domain).ok_or_else(|| {
        ApiError(
            StatusCode::NOT_FOUND,
            format!("no vocabulary for domain `{domain}`"),
        )
    })?;
    let value: serde_json::Value = serde_json::from_str(&v.to_json()).expect("vocabulary json");
    Ok(Json(value).into_response())
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/queue", get(queue))
        .route("/judgments", post(post_judgment))
        .route("/accuracy", get(accuracy))
        .route("/refinements/apply", post(apply))
        .route("/vocab/{domain}", get(vocab))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: ServiceState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(Arc::new(RwLock::new(state)))).await
}
