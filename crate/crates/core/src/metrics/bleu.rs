use std::collections::HashMap;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use super::{EvalRecord, MetricError};
use crate::corpus::{tokenize, Lang};
use crate::exec::{self, Execution};
use crate::text::nfc;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU. Summing per-sentence stats and
/// scoring the sum gives corpus BLEU.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl Add for BleuStats {
    type Output = BleuStats;
    fn add(mut self, o: BleuStats) -> BleuStats {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore {
    /// 0..=100.
    pub score: f64,
    /// Smoothed modified precisions, in percent.
    pub ngram_precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram matches and totals for one hypothesis/reference pair.
pub fn sentence_stats(hyp: &[String], reference: &[String]) -> BleuStats {
    let mut s = BleuStats {
        hyp_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        s.matches[n - 1] = h
            .iter()
            .map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

impl BleuStats {
    /// Geometric mean of the four precisions times the brevity penalty.
    ///
    /// Zero match counts are smoothed exponentially: the k-th zero precision
    /// becomes `1 / (2^k * total)`. An order with no hypothesis n-grams at
    /// all has precision 0, which drives the score to 0.
    pub fn score(&self) -> BleuScore {
        let mut precisions = [0.0; MAX_ORDER];
        let mut smooth = 1.0;
        for ((p, &m), &t) in precisions.iter_mut().zip(&self.matches).zip(&self.totals) {
            if t == 0 {
                break;
            }
            *p = if m == 0 {
                smooth *= 2.0;
                100.0 / (smooth * t as f64)
            } else {
                100.0 * m as f64 / t as f64
            };
        }
        let brevity_penalty = if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        let score = if precisions.iter().any(|p| *p <= 0.0) {
            0.0
        } else {
            let log_mean =
                precisions.iter().map(|p| (p / 100.0).ln()).sum::<f64>() / MAX_ORDER as f64;
            100.0 * brevity_penalty * log_mean.exp()
        };
        BleuScore {
            score,
            ngram_precisions: precisions,
            brevity_penalty,
            hyp_len: self.hyp_len,
            ref_len: self.ref_len,
        }
    }
}

fn tokens(text: &str, lang: &Lang) -> Vec<String> {
    tokenize(&nfc(text), lang)
}

/// Per-record stats; errored records contribute nothing.
pub(crate) fn record_stats(
    records: &[EvalRecord],
    lang: &Lang,
    exec: Execution,
) -> Vec<Option<BleuStats>> {
    exec::map(exec, records, |r| {
        r.is_scorable()
            .then(|| sentence_stats(&tokens(&r.hypothesis, lang), &tokens(&r.reference, lang)))
    })
}

pub fn corpus_bleu(records: &[EvalRecord], target_lang: &Lang) -> Result<BleuScore, MetricError> {
    corpus_bleu_with(records, target_lang, Execution::default())
}

pub fn corpus_bleu_with(
    records: &[EvalRecord],
    target_lang: &Lang,
    exec: Execution,
) -> Result<BleuScore, MetricError> {
    let stats = record_stats(records, target_lang, exec);
    if stats.iter().all(Option::is_none) {
        return Err(MetricError::NoScorableRecords);
    }
    Ok(stats
        .into_iter()
        .flatten()
        .fold(BleuStats::default(), Add::add)
        .score())
}

/// Describes the BLEU configuration, printed alongside scores.
pub fn bleu_signature(target_lang: &Lang) -> String {
    let tok = if target_lang.is_cjk() {
        "char"
    } else {
        "word-punct"
    };
    format!(
        "nrefs:1|case:mixed|eff:no|tok:{tok}|smooth:exp|lang:{}|version:{}",
        target_lang.code(),
        env!("CARGO_PKG_VERSION")
    )
}
