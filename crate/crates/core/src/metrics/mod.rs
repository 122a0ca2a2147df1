//! Scoring: corpus BLEU, disambiguation accuracy, paired bootstrap
//! significance and the LLM-judge protocol.

mod bleu;
mod bootstrap;
mod disamb;
pub mod judge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::TemplateId;

pub use bleu::{
    bleu_signature, corpus_bleu, corpus_bleu_with, sentence_stats, BleuScore, BleuStats, MAX_ORDER,
};
pub use bootstrap::{
    paired_bootstrap, BetterSystem, BleuMetric, CorpusMetric, DisambMetric, SignificanceResult,
};
pub use disamb::{disambiguation_accuracy, occurrence_matches, DisambiguationResult, MatchMode};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no scorable records (every record has an error)")]
    NoScorableRecords,
    #[error("record sets are not aligned on line numbers: {0}")]
    Misaligned(String),
    #[error("bootstrap needs at least {MIN_RESAMPLES} resamples, got {0}")]
    TooFewResamples(usize),
    #[error("no records to compare")]
    Empty,
}

/// One hypothesis for one test sentence under one strategy.
///
/// Invariant: `hypothesis` is empty exactly when `error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub line_no: usize,
    pub domain: String,
    pub template: TemplateId,
    pub source: String,
    pub reference: String,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn is_scorable(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisambSummary {
    pub m: usize,
    pub n: usize,
    pub accuracy: Option<f64>,
}

impl From<DisambiguationResult> for DisambSummary {
    fn from(r: DisambiguationResult) -> Self {
        DisambSummary {
            m: r.m,
            n: r.n,
            accuracy: r.accuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeSummary {
    pub found: u64,
    pub correct: u64,
}

/// Score output for one (domain, template) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub domain: String,
    pub template: TemplateId,
    pub bleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comet: Option<f64>,
    pub disamb: DisambSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<JudgeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu_signature: Option<String>,
    /// `lenient` or `strict`, the rule behind `disamb`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_mode: Option<MatchMode>,
}

impl ScoreFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("score file serializes");
        s.push('\n');
        s
    }
}
