//! Per-domain bilingual lexicons extracted from word-aligned training data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AlignmentLink, Corpus, SentencePair};
use crate::exec::{self, Execution};
use crate::text::{is_punctuation_only, normalize_word};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: expected 4 tab-separated columns, found {found}")]
    Columns { line: usize, found: usize },
    #[error("line {line}: invalid count `{value}`")]
    Count { line: usize, value: String },
}

/// Minimum count used when building ambiguous vocabularies.
pub const DEFAULT_AMBIGUITY_MIN_COUNT: u64 = 2;
/// Minimum count used for raw lexicon export.
pub const DEFAULT_EXPORT_MIN_COUNT: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BilingualEntry {
    pub source_word: String,
    pub target_word: String,
    pub count: u64,
}

/// `source word -> target word -> count`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainLexicon {
    pub domain: String,
    pub entries: BTreeMap<String, BTreeMap<String, u64>>,
}

impl DomainLexicon {
    pub fn new(domain: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, source: &str, target: &str, count: u64) {
        if count == 0 {
            return;
        }
        *self
            .entries
            .entry(source.to_string())
            .or_default()
            .entry(target.to_string())
            .or_insert(0) += count;
    }

    /// Removes one (source, target) pair, pruning the source key when it
    /// becomes empty. Returns whether the pair existed.
    pub fn remove(&mut self, source: &str, target: &str) -> bool {
        let Some(targets) = self.entries.get_mut(source) else {
            return false;
        };
        let removed = targets.remove(target).is_some();
        if targets.is_empty() {
            self.entries.remove(source);
        }
        removed
    }

    pub fn translations(&self, source: &str) -> Option<BTreeSet<&str>> {
        self.entries
            .get(source)
            .map(|t| t.keys().map(String::as_str).collect())
    }

    pub fn total_count(&self) -> u64 {
        self.entries.values().flat_map(|t| t.values()).sum()
    }

    pub fn pair_count(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    /// All (source, target, count) triples in (source, target) order.
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.entries
            .iter()
            .flat_map(|(s, t)| t.iter().map(move |(w, c)| (s.as_str(), w.as_str(), *c)))
    }

    fn merge(mut self, other: DomainLexicon) -> DomainLexicon {
        for (s, targets) in other.entries {
            let slot = self.entries.entry(s).or_default();
            for (t, c) in targets {
                *slot.entry(t).or_insert(0) += c;
            }
        }
        self
    }
}

/// One entry per link, mapping the source token at `src_index` to the target
/// token at `tgt_index`. Links are assumed in bounds (validated at load).
pub fn extract_pairs(
    pair: &SentencePair,
    links: &[AlignmentLink],
    casefold: bool,
) -> Vec<BilingualEntry> {
    links
        .iter()
        .map(|l| BilingualEntry {
            source_word: normalize_word(&pair.source_tokens[l.src_index], casefold),
            target_word: normalize_word(&pair.target_tokens[l.tgt_index], casefold),
            count: 1,
        })
        .collect()
}

/// Merges entries by (source, target), summing counts.
pub fn build_domain_lexicon(entries: &[BilingualEntry], domain: &str) -> DomainLexicon {
    let mut lex = DomainLexicon::new(domain);
    for e in entries {
        lex.add(&e.source_word, &e.target_word, e.count);
    }
    lex
}

/// Drops pairs below `min_count`, stopword and punctuation-only sources, and
/// source keys left empty.
pub fn filter_lexicon(
    lex: &DomainLexicon,
    min_count: u64,
    stopwords: &BTreeSet<String>,
) -> DomainLexicon {
    let min_count = min_count.max(1);
    let mut out = DomainLexicon::new(lex.domain.clone());
    for (source, targets) in &lex.entries {
        if stopwords.contains(source) || is_punctuation_only(source) {
            continue;
        }
        let kept: BTreeMap<String, u64> = targets
            .iter()
            .filter(|(t, c)| **c >= min_count && !is_punctuation_only(t))
            .map(|(t, c)| (t.clone(), *c))
            .collect();
        if !kept.is_empty() {
            out.entries.insert(source.clone(), kept);
        }
    }
    out
}

/// Builds one lexicon per corpus domain from all aligned train pairs.
///
/// Sentences are processed independently and merged with an associative,
/// commutative reduction, so `exec` only affects speed.
pub fn build_lexicons(
    corpus: &Corpus,
    casefold: bool,
    exec: Execution,
) -> BTreeMap<String, DomainLexicon> {
    let aligned = corpus.aligned_train();
    let merged = exec::fold_reduce(
        exec,
        &aligned,
        BTreeMap::<String, DomainLexicon>::new,
        |mut acc, (pair, links)| {
            let lex = acc
                .entry(pair.domain.clone())
                .or_insert_with(|| DomainLexicon::new(pair.domain.clone()));
            for e in extract_pairs(pair, links, casefold) {
                lex.add(&e.source_word, &e.target_word, e.count);
            }
            acc
        },
        |mut a, b| {
            for (d, lex) in b {
                let merged = match a.remove(&d) {
                    Some(existing) => existing.merge(lex),
                    None => lex,
                };
                a.insert(d, merged);
            }
            a
        },
    );
    // Domains without aligned pairs still get an (empty) lexicon.
    corpus
        .domains
        .iter()
        .map(|d| {
            let lex = merged
                .get(&d.id)
                .cloned()
                .unwrap_or_else(|| DomainLexicon::new(d.id.clone()));
            (d.id.clone(), lex)
        })
        .collect()
}

/// Serializes as `domain\tsource\ttarget\tcount`, sorted by source, then
/// descending count, then target.
pub fn to_tsv(lex: &DomainLexicon) -> String {
    let mut out = String::new();
    for (source, targets) in &lex.entries {
        let mut rows: Vec<(&String, &u64)> = targets.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        for (t, c) in rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", lex.domain, source, t, c);
        }
    }
    out
}

/// Parses lexicon TSV. Rows may mix domains; one lexicon per domain is
/// returned.
pub fn from_tsv(content: &str) -> Result<BTreeMap<String, DomainLexicon>, LexiconError> {
    let mut out: BTreeMap<String, DomainLexicon> = BTreeMap::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(LexiconError::Columns {
                line: i + 1,
                found: cols.len(),
            });
        }
        let count: u64 = cols[3].trim().parse().map_err(|_| LexiconError::Count {
            line: i + 1,
            value: cols[3].to_string(),
        })?;
        if count == 0 {
            return Err(LexiconError::Count {
                line: i + 1,
                value: cols[3].to_string(),
            });
        }
        out.entry(cols[0].to_string())
            .or_insert_with(|| DomainLexicon::new(cols[0]))
            .add(cols[1], cols[2], count);
    }
    Ok(out)
}

/// A small English function-word list used when the source language is
/// English and no stopword file is given.
pub fn default_stopwords(lang_code: &str) -> BTreeSet<String> {
    const EN: &[&str] = &[
        "a", "an", "the", "of", "to", "in", "on", "at", "by", "for", "with", "from", "and", "or",
        "but", "is", "are", "was", "were", "be", "been", "it", "its", "this", "that", "these",
        "those", "he", "she", "they", "we", "you", "i", "his", "her", "their", "our", "your", "as",
        "not", "do", "does", "did", "have", "has", "had",
    ];
    match lang_code {
        "en" => EN.iter().map(|s| s.to_string()).collect(),
        _ => BTreeSet::new(),
    }
}
