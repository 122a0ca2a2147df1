//! Paired bootstrap resampling over test sentences.
//!
//! Both systems are scored on the same resampled line sets; the p-value is
//! the fraction of resamples in which the system that loses on the full test
//! set scores at least as well as the winner.

use std::collections::BTreeSet;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::bleu::{record_stats, BleuStats};
use super::disamb::{occurrence_matches, MatchMode};
use super::{EvalRecord, MetricError, MIN_RESAMPLES, SIGNIFICANCE_LEVEL};
use crate::ambiguity::AnnotatedOccurrence;
use crate::corpus::{tokenize, Lang};
use crate::exec::{self, Execution};
use crate::sampling::{derive_seed_index, resample_indices};
use crate::text::normalize_word;

/// A corpus-level metric decomposed into additive per-line statistics.
pub trait CorpusMetric: Sync {
    type Stats: Copy + Default + Send + Sync + Add<Output = Self::Stats>;

    fn name(&self) -> &'static str;
    /// Per-line statistics, in the order of `records`.
    fn line_stats(&self, records: &[EvalRecord]) -> Vec<Self::Stats>;
    fn score(&self, total: Self::Stats) -> f64;
}

pub struct BleuMetric {
    pub target_lang: Lang,
    pub exec: Execution,
}

impl CorpusMetric for BleuMetric {
    type Stats = BleuStats;

    fn name(&self) -> &'static str {
        "bleu"
    }

    fn line_stats(&self, records: &[EvalRecord]) -> Vec<BleuStats> {
        record_stats(records, &self.target_lang, self.exec)
            .into_iter()
            .map(Option::unwrap_or_default)
            .collect()
    }

    fn score(&self, total: BleuStats) -> f64 {
        total.score().score
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub m: u64,
    pub n: u64,
}

impl Add for MatchCounts {
    type Output = MatchCounts;
    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            m: self.m + o.m,
            n: self.n + o.n,
        }
    }
}

/// Disambiguation accuracy in percent.
pub struct DisambMetric<'a> {
    pub annotations: &'a [AnnotatedOccurrence],
    pub target_lang: Lang,
    pub mode: MatchMode,
}

impl CorpusMetric for DisambMetric<'_> {
    type Stats = MatchCounts;

    fn name(&self) -> &'static str {
        "disamb"
    }

    fn line_stats(&self, records: &[EvalRecord]) -> Vec<MatchCounts> {
        records
            .iter()
            .map(|r| {
                if !r.is_scorable() {
                    return MatchCounts::default();
                }
                let hyp = tokenize(&normalize_word(&r.hypothesis, true), &self.target_lang);
                self.annotations
                    .iter()
                    .filter(|o| o.line_no == r.line_no)
                    .fold(MatchCounts::default(), |acc, o| {
                        let hit = occurrence_matches(&hyp, o, &self.target_lang, self.mode);
                        acc + MatchCounts {
                            m: hit as u64,
                            n: 1,
                        }
                    })
            })
            .collect()
    }

    fn score(&self, total: MatchCounts) -> f64 {
        if total.n == 0 {
            0.0
        } else {
            100.0 * total.m as f64 / total.n as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetterSystem {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub metric: String,
    pub p_value: f64,
    pub n_resamples: usize,
    pub better_system: BetterSystem,
    pub score_a: f64,
    pub score_b: f64,
    /// `p_value < 0.05`.
    pub significant: bool,
}

fn sorted_by_line(records: &[EvalRecord], side: &str) -> Result<Vec<EvalRecord>, MetricError> {
    let mut v = records.to_vec();
    v.sort_by_key(|r| r.line_no);
    if let Some(w) = v.windows(2).find(|w| w[0].line_no == w[1].line_no) {
        return Err(MetricError::Misaligned(format!(
            "system {side} has line {} twice",
            w[0].line_no
        )));
    }
    Ok(v)
}

pub fn paired_bootstrap<M: CorpusMetric>(
    records_a: &[EvalRecord],
    records_b: &[EvalRecord],
    metric: &M,
    n_resamples: usize,
    seed: u64,
    exec: Execution,
) -> Result<SignificanceResult, MetricError> {
    if n_resamples < MIN_RESAMPLES {
        return Err(MetricError::TooFewResamples(n_resamples));
    }
    let a = sorted_by_line(records_a, "A")?;
    let b = sorted_by_line(records_b, "B")?;
    let lines_a: BTreeSet<usize> = a.iter().map(|r| r.line_no).collect();
    let lines_b: BTreeSet<usize> = b.iter().map(|r| r.line_no).collect();
    if lines_a != lines_b {
        let only_a = lines_a.difference(&lines_b).count();
        let only_b = lines_b.difference(&lines_a).count();
        return Err(MetricError::Misaligned(format!(
            "{only_a} lines only in A, {only_b} lines only in B"
        )));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }

    let stats_a = metric.line_stats(&a);
    let stats_b = metric.line_stats(&b);
    let total = |stats: &[M::Stats], idx: &[usize]| {
        idx.iter()
            .fold(M::Stats::default(), |acc, &i| acc + stats[i])
    };
    let all: Vec<usize> = (0..a.len()).collect();
    let score_a = metric.score(total(&stats_a, &all));
    let score_b = metric.score(total(&stats_b, &all));
    let better_system = if score_a > score_b {
        BetterSystem::A
    } else if score_b > score_a {
        BetterSystem::B
    } else {
        BetterSystem::Tie
    };

    let flips = exec::map_range(exec, n_resamples, |i| {
        let idx = resample_indices(derive_seed_index(seed, i as u64), a.len());
        let sa = metric.score(total(&stats_a, &idx));
        let sb = metric.score(total(&stats_b, &idx));
        match better_system {
            BetterSystem::B => sa >= sb,
            BetterSystem::A | BetterSystem::Tie => sb >= sa,
        }
    });
    let p_value = flips.iter().filter(|f| **f).count() as f64 / n_resamples as f64;
    Ok(SignificanceResult {
        metric: metric.name().to_string(),
        p_value,
        n_resamples,
        better_system,
        score_a,
        score_b,
        significant: p_value < SIGNIFICANCE_LEVEL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::TemplateId;

    fn rec(line_no: usize, hyp: &str, reference: &str) -> EvalRecord {
        EvalRecord {
            line_no,
            domain: "d".into(),
            template: TemplateId::T1,
            source: String::new(),
            reference: reference.into(),
            hypothesis: hyp.into(),
            error: None,
        }
    }

    fn bleu() -> BleuMetric {
        BleuMetric {
            target_lang: Lang::new("en").unwrap(),
            exec: Execution::Sequential,
        }
    }

    #[test]
    fn rejects_misaligned_and_small() {
        let a = [rec(1, "a b c d", "a b c d")];
        let b = [rec(2, "a b c d", "a b c d")];
        assert!(matches!(
            paired_bootstrap(&a, &b, &bleu(), 100, 1, Execution::Sequential),
            Err(MetricError::Misaligned(_))
        ));
        assert!(matches!(
            paired_bootstrap(&a, &a, &bleu(), 99, 1, Execution::Sequential),
            Err(MetricError::TooFewResamples(99))
        ));
        let dup = [rec(1, "a", "a"), rec(1, "a", "a")];
        assert!(paired_bootstrap(&dup, &dup, &bleu(), 100, 1, Execution::Sequential).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let a: Vec<_> = (1..=50)
            .map(|i| rec(i, "the cat sat on the mat", "the cat sat on a mat"))
            .collect();
        let b: Vec<_> = (1..=50)
            .map(|i| {
                rec(
                    i,
                    if i % 3 == 0 {
                        "the cat sat on a mat"
                    } else {
                        "a dog"
                    },
                    "the cat sat on a mat",
                )
            })
            .collect();
        let s = paired_bootstrap(&a, &b, &bleu(), 300, 9, Execution::Sequential).unwrap();
        let p = paired_bootstrap(&a, &b, &bleu(), 300, 9, Execution::Parallel).unwrap();
        assert_eq!(s, p);
    }
}
