use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalRecord;
use crate::ambiguity::AnnotatedOccurrence;
use crate::corpus::{tokenize, Lang};
use crate::text::normalize_word;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Some expected translation occurs in the hypothesis.
    #[default]
    Lenient,
    /// Lenient, and no distractor outside the expected set occurs.
    Strict,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Lenient => "lenient",
            MatchMode::Strict => "strict",
        }
    }
}

impl FromStr for MatchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lenient" => Ok(MatchMode::Lenient),
            "strict" => Ok(MatchMode::Strict),
            other => Err(format!(
                "unknown match mode `{other}` (expected lenient or strict)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationResult {
    pub m: usize,
    pub n: usize,
    /// `m / n`; absent when `n == 0`.
    pub accuracy: Option<f64>,
}

impl DisambiguationResult {
    pub fn from_counts(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            accuracy: (n > 0).then(|| m as f64 / n as f64),
        }
    }
}

fn normalized_tokens(text: &str, lang: &Lang) -> Vec<String> {
    tokenize(&normalize_word(text, true), lang)
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Whether a hypothesis (already normalized and tokenized) translates the
/// occurrence correctly under `mode`.
pub fn occurrence_matches(
    hyp_tokens: &[String],
    occ: &AnnotatedOccurrence,
    lang: &Lang,
    mode: MatchMode,
) -> bool {
    let found = |word: &String| contains_subsequence(hyp_tokens, &normalized_tokens(word, lang));
    let hit = occ.expected.iter().any(found);
    match mode {
        MatchMode::Lenient => hit,
        MatchMode::Strict => {
            hit && !occ
                .distractors
                .iter()
                .filter(|d| !occ.expected.contains(*d))
                .any(found)
        }
    }
}

/// Counts `m` correctly translated occurrences out of `n` scored ones.
///
/// Occurrences whose line has an errored record are not scored. Occurrences
/// whose line is missing from `records` are skipped and reported.
pub fn disambiguation_accuracy(
    records: &[EvalRecord],
    annotations: &[AnnotatedOccurrence],
    target_lang: &Lang,
    mode: MatchMode,
) -> (DisambiguationResult, Vec<String>) {
    let by_line: BTreeMap<usize, &EvalRecord> = records.iter().map(|r| (r.line_no, r)).collect();
    let mut hyp_cache: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    let mut missing = BTreeSet::new();
    let (mut m, mut n) = (0, 0);
    for occ in annotations {
        let Some(rec) = by_line.get(&occ.line_no) else {
            missing.insert(occ.line_no);
            continue;
        };
        if !rec.is_scorable() {
            continue;
        }
        let hyp = hyp_cache
            .entry(occ.line_no)
            .or_insert_with(|| normalized_tokens(&rec.hypothesis, target_lang));
        n += 1;
        if occurrence_matches(hyp, occ, target_lang, mode) {
            m += 1;
        }
    }
    let warnings = missing
        .into_iter()
        .map(|l| format!("annotation references line {l}, which has no record; skipped"))
        .collect();
    (DisambiguationResult::from_counts(m, n), warnings)
}
