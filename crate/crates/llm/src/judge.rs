//! LLM-judge runs and delegation to an external learned-metric scorer.

use std::time::Duration;

use ambig_core::metrics::judge::{
    judge_prompt, parse_judge_reply, JudgeParseError, REFORMAT_REQUEST,
};
use ambig_core::metrics::{EvalRecord, JudgeSummary};
use ambig_core::prompts::{ChatMessage, Role};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{complete_messages, ChatBackend, RetryPolicy};
use crate::config::GenerationConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub line_no: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub found: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

async fn judge_one(
    backend: &dyn ChatBackend,
    record: &EvalRecord,
    cfg: &GenerationConfig,
    retry: &RetryPolicy,
) -> Result<(u64, u64), String> {
    let limit = cfg.max_input_tokens_few_shot;
    let mut messages = vec![ChatMessage::new(Role::User, judge_prompt(record))];
    let first = complete_messages(backend, messages.clone(), &record.source, cfg, limit, retry)
        .await
        .map_err(|e| e.to_string())?;
    match parse_judge_reply(&first.response_text) {
        Ok(v) => return Ok(v),
        Err(e @ JudgeParseError::CorrectExceedsFound { .. }) => return Err(e.to_string()),
        Err(JudgeParseError::Unparseable) => {}
    }
    messages.push(ChatMessage::new(Role::Assistant, first.response_text));
    messages.push(ChatMessage::new(Role::User, REFORMAT_REQUEST));
    let second = complete_messages(backend, messages, &record.source, cfg, limit, retry)
        .await
        .map_err(|e| e.to_string())?;
    parse_judge_reply(&second.response_text).map_err(|e| format!("{e} (after reformat request)"))
}

/// Judges every scorable record. Failed judgments are excluded from the
/// summary and reported in their outcome.
pub async fn gpt_judge(
    backend: &dyn ChatBackend,
    records: &[EvalRecord],
    cfg: &GenerationConfig,
    retry: &RetryPolicy,
    parallelism: usize,
) -> (Vec<JudgeOutcome>, JudgeSummary) {
    let outcomes: Vec<JudgeOutcome> = stream::iter(records.iter().filter(|r| r.is_scorable()))
        .map(|r| async move {
            match judge_one(backend, r, cfg, retry).await {
                Ok((found, correct)) => JudgeOutcome {
                    line_no: r.line_no,
                    found: Some(found),
                    correct: Some(correct),
                    error: None,
                },
                Err(e) => JudgeOutcome {
                    line_no: r.line_no,
                    found: None,
                    correct: None,
                    error: Some(e),
                },
            }
        })
        .buffered(parallelism.max(1))
        .collect()
        .await;
    let summary = outcomes.iter().fold(
        JudgeSummary {
            found: 0,
            correct: 0,
        },
        |acc, o| JudgeSummary {
            found: acc.found + o.found.unwrap_or(0),
            correct: acc.correct + o.correct.unwrap_or(0),
        },
    );
    (outcomes, summary)
}

#[derive(Debug, Error)]
pub enum ExternalScoreError {
    #[error("scorer request failed: {0}")]
    Request(String),
    #[error("scorer returned {got} scores for {sent} triples")]
    Count { sent: usize, got: usize },
    #[error("scorer returned {0}, outside [0, 1]")]
    OutOfRange(f64),
}

#[derive(Serialize)]
struct Triple<'a> {
    source: &'a str,
    reference: &'a str,
    hypothesis: &'a str,
}

/// Posts `{source, reference, hypothesis}` triples to `{url}/score` and
/// scales the returned [0, 1] scores to [0, 100]. Errored records get no
/// score.
pub async fn external_score(
    records: &[EvalRecord],
    scorer_url: &str,
    timeout: Duration,
) -> Result<Vec<Option<f64>>, ExternalScoreError> {
    let scorable: Vec<&EvalRecord> = records.iter().filter(|r| r.is_scorable()).collect();
    let triples: Vec<Triple> = scorable
        .iter()
        .map(|r| Triple {
            source: &r.source,
            reference: &r.reference,
            hypothesis: &r.hypothesis,
        })
        .collect();
    let client = reqwest::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| ExternalScoreError::Request(e.to_string()))?;
    let resp = client
        .post(format!("{}/score", scorer_url.trim_end_matches('/')))
        .json(&triples)
        .send()
        .await
        .and_then(|r| r.error_for_status())
        .map_err(|e| ExternalScoreError::Request(e.to_string()))?;
    let scores: Vec<f64> = resp
        .json()
        .await
        .map_err(|e| ExternalScoreError::Request(e.to_string()))?;
    if scores.len() != triples.len() {
        return Err(ExternalScoreError::Count {
            sent: triples.len(),
            got: scores.len(),
        });
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(ExternalScoreError::OutOfRange(*bad));
    }
    let mut it = scores.into_iter();
    Ok(records
        .iter()
        .map(|r| {
            if r.is_scorable() {
                it.next().map(|s| s * 100.0)
            } else {
                None
            }
        })
        .collect())
}

pub fn mean_score(scores: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = scores.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}
