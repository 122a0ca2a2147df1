//! Human review of aligned word pairs: seeded sampling into a review queue,
//! an append-only judgment journal, per-domain alignment accuracy, and
//! label-driven refinement of lexicons and ambiguous vocabularies.
//!
//! Label policy: `incorrect` removes the pair, `partially_correct` keeps it
//! but flags it for manual follow-up, `correct` keeps it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::AmbiguousVocabulary;
use crate::corpus::Corpus;
use crate::lexicon::DomainLexicon;
use crate::sampling::{derive_seed, sample_indices};
use crate::text::normalize_word;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("unknown label `{0}` (expected correct, partially_correct or incorrect)")]
    UnknownLabel(String),
    #[error("annotator id must not be empty")]
    EmptyAnnotator,
    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("journal {path}: {message}")]
    Journal { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    PartiallyCorrect,
    Incorrect,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Correct => "correct",
            Label::PartiallyCorrect => "partially_correct",
            Label::Incorrect => "incorrect",
        }
    }

    fn severity(self) -> u8 {
        match self {
            Label::Correct => 0,
            Label::PartiallyCorrect => 1,
            Label::Incorrect => 2,
        }
    }
}

impl FromStr for Label {
    type Err = AnnotationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correct" => Ok(Label::Correct),
            "partially_correct" => Ok(Label::PartiallyCorrect),
            "incorrect" => Ok(Label::Incorrect),
            other => Err(AnnotationError::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Pending,
    Judged,
}

impl FromStr for ItemStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(ItemStatus::Pending),
            "judged" => Ok(ItemStatus::Judged),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub domain: String,
    pub source_word: String,
    pub target_word: String,
    #[serde(default)]
    pub examples: Vec<usize>,
    #[serde(default = "pending")]
    pub status: ItemStatus,
}

fn pending() -> ItemStatus {
    ItemStatus::Pending
}

/// Samples `min(sample_size, pairs)` (source, target) pairs per domain,
/// uniformly without replacement. Each domain draws from its own seeded
/// stream, so results do not depend on which other domains are present.
///
/// Returns the items and one warning per empty domain.
pub fn enqueue_samples(
    lexicons: &BTreeMap<String, DomainLexicon>,
    sample_size: usize,
    seed: u64,
) -> Result<(Vec<ReviewItem>, Vec<String>), AnnotationError> {
    if sample_size == 0 {
        return Err(AnnotationError::ZeroSampleSize);
    }
    let mut items = Vec::new();
    let mut warnings = Vec::new();
    for (domain, lex) in lexicons {
        let population: Vec<(&str, &str, u64)> = lex.pairs().collect();
        if population.is_empty() {
            warnings.push(format!(
                "domain `{domain}` has an empty lexicon; no items sampled"
            ));
            continue;
        }
        let drawn = sample_indices(derive_seed(seed, domain), population.len(), sample_size);
        for (n, idx) in drawn.into_iter().enumerate() {
            let (s, t, _) = population[idx];
            items.push(ReviewItem {
                item_id: format!("{domain}-{:05}", n + 1),
                domain: domain.clone(),
                source_word: s.to_string(),
                target_word: t.to_string(),
                examples: Vec::new(),
                status: ItemStatus::Pending,
            });
        }
    }
    Ok((items, warnings))
}

/// Fills each item's example references with up to `max` train line numbers
/// whose alignment links the item's word pair.
pub fn attach_examples(items: &mut [ReviewItem], corpus: &Corpus, casefold: bool, max: usize) {
    let mut index: BTreeMap<(&str, String, String), Vec<usize>> = BTreeMap::new();
    for (pair, links) in corpus.aligned_train() {
        let mut seen = BTreeSet::new();
        for l in links {
            let s = normalize_word(&pair.source_tokens[l.src_index], casefold);
            let t = normalize_word(&pair.target_tokens[l.tgt_index], casefold);
            if seen.insert((s.clone(), t.clone())) {
                index
                    .entry((pair.domain.as_str(), s, t))
                    .or_default()
                    .push(pair.line_no);
            }
        }
    }
    for item in items {
        let key = (
            item.domain.as_str(),
            item.source_word.clone(),
            item.target_word.clone(),
        );
        item.examples = index
            .get(&key)
            .map(|v| v.iter().take(max).copied().collect())
            .unwrap_or_default();
    }
}

pub fn items_to_jsonl(items: &[ReviewItem]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("item serializes") + "\n")
        .collect()
}

pub fn items_from_jsonl(s: &str) -> Result<Vec<ReviewItem>, serde_json::Error> {
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// One journal line: `{ts, item_id, label, annotator}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub ts: DateTime<Utc>,
    pub item_id: String,
    pub label: Label,
    pub annotator: String,
}

/// How an item's judgments from several annotators resolve to one label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjudication {
    /// The most recent active judgment wins.
    #[default]
    Single,
    /// Most frequent active label; ties go to the more severe label.
    Majority,
}

impl FromStr for Adjudication {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Adjudication::Single),
            "majority" => Ok(Adjudication::Majority),
            other => Err(format!("unknown adjudication `{other}`")),
        }
    }
}

/// Review items plus the full judgment history.
///
/// One active judgment per (item, annotator); re-judging replaces the
/// active one while the history keeps every call.
#[derive(Debug, Clone, Default)]
pub struct JudgmentStore {
    order: Vec<String>,
    items: BTreeMap<String, ReviewItem>,
    active: BTreeMap<(String, String), (usize, Judgment)>,
    history: Vec<Judgment>,
}

impl JudgmentStore {
    pub fn new(items: Vec<ReviewItem>) -> Result<Self, AnnotationError> {
        let mut store = JudgmentStore::default();
        for mut item in items {
            if store.items.contains_key(&item.item_id) {
                return Err(AnnotationError::DuplicateItem(item.item_id));
            }
            item.status = ItemStatus::Pending;
            store.order.push(item.item_id.clone());
            store.items.insert(item.item_id.clone(), item);
        }
        Ok(store)
    }

    /// Validates and records a judgment given as raw strings.
    pub fn record(
        &mut self,
        item_id: &str,
        label: &str,
        annotator: &str,
        ts: DateTime<Utc>,
    ) -> Result<Judgment, AnnotationError> {
        let label: Label = label.parse()?;
        let judgment = Judgment {
            ts,
            item_id: item_id.to_string(),
            label,
            annotator: annotator.to_string(),
        };
        self.apply(judgment.clone())?;
        Ok(judgment)
    }

    pub fn apply(&mut self, j: Judgment) -> Result<(), AnnotationError> {
        if j.annotator.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        let item = self
            .items
            .get_mut(&j.item_id)
            .ok_or_else(|| AnnotationError::UnknownItem(j.item_id.clone()))?;
        item.status = ItemStatus::Judged;
        let seq = self.history.len();
        self.active
            .insert((j.item_id.clone(), j.annotator.clone()), (seq, j.clone()));
        self.history.push(j);
        Ok(())
    }

    pub fn item(&self, id: &str) -> Option<&ReviewItem> {
        self.items.get(id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.order.iter().map(|id| &self.items[id])
    }

    pub fn queue(&self, domain: Option<&str>, status: Option<ItemStatus>) -> Vec<ReviewItem> {
        self.items()
            .filter(|i| domain.is_none_or(|d| i.domain == d))
            .filter(|i| status.is_none_or(|s| i.status == s))
            .cloned()
            .collect()
    }

    pub fn history(&self) -> &[Judgment] {
        &self.history
    }

    pub fn active_label(&self, item_id: &str, annotator: &str) -> Option<Label> {
        self.active
            .get(&(item_id.to_string(), annotator.to_string()))
            .map(|(_, j)| j.label)
    }

    /// Resolved label per judged item.
    pub fn effective_labels(&self, adjudication: Adjudication) -> BTreeMap<String, Label> {
        let mut per_item: BTreeMap<&str, Vec<(usize, Label)>> = BTreeMap::new();
        for ((item, _), (seq, j)) in &self.active {
            per_item
                .entry(item.as_str())
                .or_default()
                .push((*seq, j.label));
        }
        per_item
            .into_iter()
            .map(|(item, labels)| {
                let label = match adjudication {
                    Adjudication::Single => {
                        labels.iter().max_by_key(|(seq, _)| *seq).map(|(_, l)| *l)
                    }
                    Adjudication::Majority => {
                        let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
                        for (_, l) in &labels {
                            *counts.entry(*l).or_default() += 1;
                        }
                        counts
                            .into_iter()
                            .max_by_key(|(l, c)| (*c, l.severity()))
                            .map(|(l, _)| l)
                    }
                };
                (item.to_string(), label.expect("judged item has a label"))
            })
            .collect()
    }

    /// Effective labels grouped by the item's domain.
    pub fn labels_by_domain(&self, adjudication: Adjudication) -> BTreeMap<String, Vec<Label>> {
        let mut out: BTreeMap<String, Vec<Label>> = BTreeMap::new();
        for (item, label) in self.effective_labels(adjudication) {
            out.entry(self.items[&item].domain.clone())
                .or_default()
                .push(label);
        }
        out
    }
}

/// Append-only JSON-lines journal; one line per judgment event.
pub struct Journal {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl Journal {
    /// Opens (creating if needed) the journal and returns the events already
    /// recorded in it.
    pub fn open(path: &Path) -> Result<(Journal, Vec<Judgment>), AnnotationError> {
        let existing = if path.exists() {
            read_journal(path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok((
            Journal {
                path: path.to_path_buf(),
                writer: BufWriter::new(file),
            },
            existing,
        ))
    }

    pub fn append(&mut self, j: &Judgment) -> Result<(), AnnotationError> {
        let line = serde_json::to_string(j).map_err(|e| AnnotationError::Journal {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_journal(path: &Path) -> Result<Vec<Judgment>, AnnotationError> {
    let raw = std::fs::read_to_string(path)?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AnnotationError::Journal {
                path: path.to_path_buf(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Replays journal events into the store. Events for items no longer in the
/// queue are skipped and reported.
pub fn replay(store: &mut JudgmentStore, events: Vec<Judgment>) -> Vec<String> {
    let mut warnings = Vec::new();
    for j in events {
        let id = j.item_id.clone();
        if let Err(e) = store.apply(j) {
            warnings.push(format!("skipping journal event for `{id}`: {e}"));
        }
    }
    warnings
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub correct: u64,
    pub partially_correct: u64,
    pub incorrect: u64,
}

impl AccuracyRow {
    pub fn total(&self) -> u64 {
        self.correct + self.partially_correct + self.incorrect
    }

    /// Exact count ratios (correct, partially correct, incorrect).
    pub fn proportions(&self) -> (f64, f64, f64) {
        let t = self.total() as f64;
        (
            self.correct as f64 / t,
            self.partially_correct as f64 / t,
            self.incorrect as f64 / t,
        )
    }

    /// Whole percentages, each rounded half-up from the exact ratio.
    pub fn percentages(&self) -> (u64, u64, u64) {
        let t = self.total();
        let pct = |c: u64| (200 * c + t) / (2 * t);
        (
            pct(self.correct),
            pct(self.partially_correct),
            pct(self.incorrect),
        )
    }
}

/// Per-domain label proportions. Domains without judgments are excluded and
/// reported as warnings.
pub fn alignment_accuracy(
    by_domain: &BTreeMap<String, Vec<Label>>,
) -> (BTreeMap<String, AccuracyRow>, Vec<String>) {
    let mut rows = BTreeMap::new();
    let mut warnings = Vec::new();
    for (domain, labels) in by_domain {
        if labels.is_empty() {
            warnings.push(format!("domain `{domain}` has no judgments; excluded"));
            continue;
        }
        let mut row = AccuracyRow::default();
        for l in labels {
            match l {
                Label::Correct => row.correct += 1,
                Label::PartiallyCorrect => row.partially_correct += 1,
                Label::Incorrect => row.incorrect += 1,
            }
        }
        rows.insert(domain.clone(), row);
    }
    (rows, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementKind {
    Keep,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RefinementAction {
    pub domain: String,
    pub source_word: String,
    pub target_word: String,
    pub action: RefinementKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementPlan {
    pub actions: Vec<RefinementAction>,
    /// Items labeled partially correct: kept, but listed for manual review.
    pub flagged: Vec<String>,
}

/// Turns resolved labels into refinement actions, in queue order.
pub fn plan_refinements(store: &JudgmentStore, adjudication: Adjudication) -> RefinementPlan {
    let labels = store.effective_labels(adjudication);
    let mut plan = RefinementPlan::default();
    for item in store.items() {
        let Some(label) = labels.get(&item.item_id) else {
            continue;
        };
        let action = match label {
            Label::Incorrect => RefinementKind::Remove,
            Label::PartiallyCorrect => {
                plan.flagged.push(item.item_id.clone());
                RefinementKind::Keep
            }
            Label::Correct => RefinementKind::Keep,
        };
        plan.actions.push(RefinementAction {
            domain: item.domain.clone(),
            source_word: item.source_word.clone(),
            target_word: item.target_word.clone(),
            action,
        });
    }
    plan
}

/// Structures that refinement actions can be applied to.
pub trait Refinable: Clone {
    /// Applies one `remove`; returns a warning when it references nothing.
    fn remove_pair(&mut self, domain: &str, source: &str, target: &str) -> Option<String>;
}

impl Refinable for DomainLexicon {
    fn remove_pair(&mut self, domain: &str, source: &str, target: &str) -> Option<String> {
        if domain != self.domain {
            return None;
        }
        if self.remove(source, target) {
            None
        } else {
            Some(format!("no pair ({domain}, {source}, {target}) to remove"))
        }
    }
}

impl Refinable for AmbiguousVocabulary {
    /// A removal judged in this vocabulary's own domain drops an expected
    /// translation; one judged elsewhere drops the distractor it contributed.
    /// Entries whose expected or distractor set empties are dropped.
    fn remove_pair(&mut self, domain: &str, source: &str, target: &str) -> Option<String> {
        let own = domain == self.domain;
        let entry = self.entries.get_mut(source)?;
        let removed = if own {
            entry.in_domain.remove(target)
        } else {
            let before = entry.distractors.len();
            entry
                .distractors
                .retain(|d| !(d.word == target && d.origin == domain));
            entry.distractors.len() != before
        };
        if entry.in_domain.is_empty() || entry.distractors.is_empty() {
            self.entries.remove(source);
        }
        if own && !removed {
            Some(format!(
                "no expected translation ({domain}, {source}, {target}) to remove"
            ))
        } else {
            None
        }
    }
}

/// Applies `remove` actions; `keep` actions are audit markers only.
pub fn apply_refinements<T: Refinable>(
    target: &T,
    actions: &[RefinementAction],
) -> (T, Vec<String>) {
    let mut out = target.clone();
    let mut warnings = Vec::new();
    for a in actions
        .iter()
        .filter(|a| a.action == RefinementKind::Remove)
    {
        if let Some(w) = out.remove_pair(&a.domain, &a.source_word, &a.target_word) {
            warnings.push(w);
        }
    }
    (out, warnings)
}
