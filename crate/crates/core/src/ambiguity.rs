//! Cross-domain ambiguous vocabularies and test-set annotation.
//!
//! A source word `s` is ambiguous for domain `d` when some other domain `d'`
//! translates it with a word `d` never uses. The entry keeps `d`'s own
//! translations as the expected set and every other domain's extra
//! translations as distractors, each tagged with the domain it came from.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentencePair;
use crate::exec::{self, Execution};
use crate::lexicon::DomainLexicon;
use crate::text::normalize_word;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AmbiguityError {
    #[error("ambiguity undefined for a single domain")]
    SingleDomain,
    #[error("vocabulary is for domain `{vocab}` but test sentence {line_no} is from `{sentence}`")]
    DomainMismatch {
        vocab: String,
        sentence: String,
        line_no: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Distractor {
    pub word: String,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguousEntry {
    pub source: String,
    pub in_domain: BTreeSet<String>,
    pub distractors: BTreeSet<Distractor>,
}

impl AmbiguousEntry {
    pub fn distractor_words(&self) -> BTreeSet<&str> {
        self.distractors.iter().map(|d| d.word.as_str()).collect()
    }

    /// Both sets nonempty and no distractor word is also expected.
    pub fn is_valid(&self) -> bool {
        !self.in_domain.is_empty()
            && !self.distractors.is_empty()
            && self
                .distractors
                .iter()
                .all(|d| !self.in_domain.contains(&d.word))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguousVocabulary {
    pub domain: String,
    pub entries: BTreeMap<String, AmbiguousEntry>,
}

/// On-disk shape: `{domain, entries: [{source, in_domain, distractors: [{word, origin}]}]}`.
#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    domain: String,
    entries: Vec<AmbiguousEntry>,
}

impl AmbiguousVocabulary {
    pub fn to_json(&self) -> String {
        let file = VocabularyFile {
            domain: self.domain.clone(),
            entries: self.entries.values().cloned().collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("vocabulary serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let file: VocabularyFile = serde_json::from_str(s)?;
        Ok(Self {
            domain: file.domain,
            entries: file
                .entries
                .into_iter()
                .map(|e| (e.source.clone(), e))
                .collect(),
        })
    }
}

/// Applies the set-difference rule to every (domain, source word).
///
/// Translation sets are compared as sets; counts are ignored.
pub fn build_ambiguous_vocabulary(
    lexicons: &BTreeMap<String, DomainLexicon>,
    exec: Execution,
) -> Result<BTreeMap<String, AmbiguousVocabulary>, AmbiguityError> {
    if lexicons.len() < 2 {
        return Err(AmbiguityError::SingleDomain);
    }
    let domains: Vec<&String> = lexicons.keys().collect();
    let vocabs = exec::map(exec, &domains, |d| vocabulary_for(d, lexicons));
    Ok(domains.into_iter().cloned().zip(vocabs).collect())
}

fn vocabulary_for(domain: &str, lexicons: &BTreeMap<String, DomainLexicon>) -> AmbiguousVocabulary {
    let own = &lexicons[domain];
    let mut entries = BTreeMap::new();
    for (source, targets) in &own.entries {
        if targets.is_empty() {
            continue;
        }
        let in_domain: BTreeSet<String> = targets.keys().cloned().collect();
        let mut distractors = BTreeSet::new();
        for (other, lex) in lexicons {
            if other == domain {
                continue;
            }
            if let Some(theirs) = lex.entries.get(source) {
                for word in theirs.keys().filter(|w| !in_domain.contains(*w)) {
                    distractors.insert(Distractor {
                        word: word.clone(),
                        origin: other.clone(),
                    });
                }
            }
        }
        if !distractors.is_empty() {
            entries.insert(
                source.clone(),
                AmbiguousEntry {
                    source: source.clone(),
                    in_domain,
                    distractors,
                },
            );
        }
    }
    AmbiguousVocabulary {
        domain: domain.to_string(),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedOccurrence {
    pub domain: String,
    pub line_no: usize,
    pub token_index: usize,
    pub source_word: String,
    pub expected: BTreeSet<String>,
    pub distractors: BTreeSet<String>,
}

/// One record per token position whose normalized token is a vocabulary key.
pub fn annotate_test_set<'a, I>(
    pairs: I,
    vocab: &AmbiguousVocabulary,
    casefold: bool,
) -> Result<Vec<AnnotatedOccurrence>, AmbiguityError>
where
    I: IntoIterator<Item = &'a SentencePair>,
{
    let mut out = Vec::new();
    for pair in pairs {
        if pair.domain != vocab.domain {
            return Err(AmbiguityError::DomainMismatch {
                vocab: vocab.domain.clone(),
                sentence: pair.domain.clone(),
                line_no: pair.line_no,
            });
        }
        for (i, tok) in pair.source_tokens.iter().enumerate() {
            let word = normalize_word(tok, casefold);
            if let Some(entry) = vocab.entries.get(&word) {
                out.push(AnnotatedOccurrence {
                    domain: pair.domain.clone(),
                    line_no: pair.line_no,
                    token_index: i,
                    source_word: word,
                    expected: entry.in_domain.clone(),
                    distractors: entry
                        .distractor_words()
                        .into_iter()
                        .map(str::to_string)
                        .collect(),
                });
            }
        }
    }
    Ok(out)
}

pub fn occurrences_to_jsonl(occ: &[AnnotatedOccurrence]) -> String {
    let mut s = String::new();
    for o in occ {
        s.push_str(&serde_json::to_string(o).expect("occurrence serializes"));
        s.push('\n');
    }
    s
}

pub fn occurrences_from_jsonl(s: &str) -> Result<Vec<AnnotatedOccurrence>, serde_json::Error> {
    s.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityStats {
    pub occurrences: usize,
    pub distinct_words: usize,
    pub sentences: usize,
}

pub fn ambiguity_stats(
    annotations: &BTreeMap<String, Vec<AnnotatedOccurrence>>,
) -> BTreeMap<String, AmbiguityStats> {
    annotations
        .iter()
        .map(|(d, occ)| {
            let words: BTreeSet<&str> = occ.iter().map(|o| o.source_word.as_str()).collect();
            let lines: BTreeSet<usize> = occ.iter().map(|o| o.line_no).collect();
            (
                d.clone(),
                AmbiguityStats {
                    occurrences: occ.len(),
                    distinct_words: words.len(),
                    sentences: lines.len(),
                },
            )
        })
        .collect()
}
