//! Runs one prompt strategy over a test set with bounded parallelism.
//!
//! Requests are issued concurrently, results are consumed in input order by
//! a single writer that appends each record to the checkpoint file, so an
//! interrupted run resumes by skipping line numbers already completed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ambig_core::metrics::EvalRecord;
use ambig_core::prompts::{extract_translation, Catalog, PromptContext, TemplateId};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::AsyncWriteExt;

use crate::backend::{complete, ChatBackend, ChatExchange, RetryPolicy};
use crate::config::GenerationConfig;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("line {0} appears twice in the dataset")]
    DuplicateLine(usize),
    #[error("aborted: {failed} of {total} sentences in domain `{domain}` failed")]
    TooManyFailures {
        domain: String,
        failed: usize,
        total: usize,
    },
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One test sentence with everything its prompt needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunItem {
    pub line_no: usize,
    pub domain: String,
    pub source: String,
    pub reference: String,
    pub context: PromptContext,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub template: TemplateId,
    pub generation: GenerationConfig,
    pub retry: RetryPolicy,
    pub parallelism: usize,
    pub checkpoint: Option<PathBuf>,
    /// The run aborts once failures exceed this share of the dataset.
    pub max_failure_ratio: f64,
}

impl RunOptions {
    pub fn new(template: TemplateId) -> Self {
        RunOptions {
            template,
            generation: GenerationConfig::default(),
            retry: RetryPolicy::default(),
            parallelism: 8,
            checkpoint: None,
            max_failure_ratio: 0.5,
        }
    }
}

/// A run-file line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub line_no: usize,
    pub domain: String,
    pub template: TemplateId,
    pub source: String,
    pub reference: String,
    pub hypothesis: String,
    pub exchanges: Vec<ChatExchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn to_eval(&self) -> EvalRecord {
        EvalRecord {
            line_no: self.line_no,
            domain: self.domain.clone(),
            template: self.template,
            source: self.source.clone(),
            reference: self.reference.clone(),
            hypothesis: self.hypothesis.clone(),
            error: self.error.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("run record serializes");
        s.push('\n');
        s
    }
}

pub fn records_to_jsonl(records: &[RunRecord]) -> String {
    records.iter().map(RunRecord::to_json_line).collect()
}

/// Parses a run file, skipping unreadable lines (an interrupted write
/// leaves at most one). Returns the records and the skipped line numbers.
pub fn records_from_jsonl(s: &str) -> (Vec<RunRecord>, Vec<usize>) {
    let mut out = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in s.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => out.push(r),
            Err(_) => bad.push(i + 1),
        }
    }
    (out, bad)
}

async fn process(
    backend: &dyn ChatBackend,
    catalog: &Catalog,
    item: &RunItem,
    opts: &RunOptions,
) -> RunRecord {
    let mut rec = RunRecord {
        line_no: item.line_no,
        domain: item.domain.clone(),
        template: opts.template,
        source: item.source.clone(),
        reference: item.reference.clone(),
        hypothesis: String::new(),
        exchanges: Vec::new(),
        error: None,
    };
    let ctx = PromptContext {
        prior_hypothesis: None,
        ..item.context.clone()
    };
    if let Err(e) = run_turns(backend, catalog, ctx, opts, &mut rec).await {
        rec.error = Some(e);
        return rec;
    }
    let last = rec
        .exchanges
        .last()
        .map(|e| e.response_text.as_str())
        .unwrap_or("");
    rec.hypothesis = extract_translation(last);
    if rec.hypothesis.is_empty() {
        rec.error = Some("empty translation in response".into());
    }
    rec
}

async fn run_turns(
    backend: &dyn ChatBackend,
    catalog: &Catalog,
    ctx: PromptContext,
    opts: &RunOptions,
    rec: &mut RunRecord,
) -> Result<(), String> {
    let t = opts.template;
    let first = catalog.render(t, &ctx).map_err(|e| e.to_string())?;
    let ex = complete(backend, &first, &opts.generation, &opts.retry)
        .await
        .map_err(|e| e.to_string())?;
    let reply = ex.response_text.clone();
    rec.exchanges.push(ex);
    if t.is_reflection() {
        let ctx = PromptContext {
            prior_hypothesis: Some(reply),
            ..ctx
        };
        let second = catalog
            .build_reflection_turns(t, &ctx)
            .map_err(|e| e.to_string())?;
        let ex = complete(backend, &second, &opts.generation, &opts.retry)
            .await
            .map_err(|e| e.to_string())?;
        rec.exchanges.push(ex);
    }
    Ok(())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Checkpoint {
        path: path.to_path_buf(),
        source,
    }
}

/// Completed records already in the checkpoint for this template and
/// dataset. The file is rewritten to hold exactly those records.
async fn load_checkpoint(
    path: &Path,
    template: TemplateId,
    lines: &BTreeSet<usize>,
) -> Result<Vec<RunRecord>, RunError> {
    let content = match tokio::fs::read_to_string(path).await {
        Ok(c) => c,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let (records, bad) = records_from_jsonl(&content);
    if !bad.is_empty() {
        tracing::warn!(path = %path.display(), lines = ?bad, "ignoring unreadable checkpoint lines");
    }
    let mut seen = BTreeSet::new();
    let kept: Vec<RunRecord> = records
        .into_iter()
        .filter(|r| r.error.is_none() && r.template == template && lines.contains(&r.line_no))
        .filter(|r| seen.insert(r.line_no))
        .collect();
    tokio::fs::write(path, records_to_jsonl(&kept))
        .await
        .map_err(io_err(path))?;
    Ok(kept)
}

/// One record per item, in input order. Per-sentence failures land in the
/// record's `error`; the run aborts when failures exceed
/// `max_failure_ratio` of the items.
pub async fn run_strategy(
    backend: &dyn ChatBackend,
    catalog: &Catalog,
    items: &[RunItem],
    opts: &RunOptions,
) -> Result<Vec<RunRecord>, RunError> {
    if items.is_empty() {
        return Err(RunError::EmptyDataset);
    }
    if opts.parallelism == 0 {
        return Err(RunError::ZeroParallelism);
    }
    let mut lines = BTreeSet::new();
    for it in items {
        if !lines.insert(it.line_no) {
            return Err(RunError::DuplicateLine(it.line_no));
        }
    }

    let mut done: BTreeMap<usize, RunRecord> = BTreeMap::new();
    let mut writer = None;
    if let Some(path) = &opts.checkpoint {
        for r in load_checkpoint(path, opts.template, &lines).await? {
            done.insert(r.line_no, r);
        }
        let f = tokio::fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(path)
            .await
            .map_err(io_err(path))?;
        writer = Some((path.clone(), f));
    }
    if !done.is_empty() {
        tracing::info!(
            resumed = done.len(),
            total = items.len(),
            "resuming from checkpoint"
        );
    }

    let pending: Vec<&RunItem> = items
        .iter()
        .filter(|it| !done.contains_key(&it.line_no))
        .collect();
    let total = items.len();
    let mut failed = 0usize;
    let mut results = stream::iter(pending)
        .map(|it| process(backend, catalog, it, opts))
        .buffered(opts.parallelism);
    while let Some(rec) = results.next().await {
        if let Some((path, f)) = writer.as_mut() {
            f.write_all(rec.to_json_line().as_bytes())
                .await
                .map_err(io_err(path))?;
            f.flush().await.map_err(io_err(path))?;
        }
        if let Some(e) = &rec.error {
            failed += 1;
            tracing::warn!(line_no = rec.line_no, error = %e, "sentence failed");
            if failed as f64 > opts.max_failure_ratio * total as f64 {
                return Err(RunError::TooManyFailures {
                    domain: rec.domain.clone(),
                    failed,
                    total,
                });
            }
        }
        done.insert(rec.line_no, rec);
    }
    Ok(items
        .iter()
        .map(|it| done.remove(&it.line_no).expect("every item processed"))
        .collect())
}
