//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance suite. Nothing here calls into the code under test except to
//! build inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use ambig_core::lexicon::DomainLexicon;
use ambig_core::prompts::{FewShotExample, PromptContext, RenderedPrompt, TemplateId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// domain -> source -> set of targets.
pub type PlainLexicons = BTreeMap<String, BTreeMap<String, BTreeSet<String>>>;

/// domain -> source -> (expected, {(distractor, origin)}).
pub type OracleVocab =
    BTreeMap<String, BTreeMap<String, (BTreeSet<String>, BTreeSet<(String, String)>)>>;

/// Up to `max_domains` domains, `max_words` source words and
/// `max_translations` translations per word, drawn from small pools so that
/// overlaps are frequent.
pub fn random_lexicons(
    r: &mut impl Rng,
    max_domains: usize,
    max_words: usize,
    max_translations: usize,
) -> (BTreeMap<String, DomainLexicon>, PlainLexicons) {
    let n_domains = r.gen_range(2..=max_domains);
    let mut lexicons = BTreeMap::new();
    let mut plain = PlainLexicons::new();
    for d in 0..n_domains {
        let domain = format!("dom{d}");
        let mut lex = DomainLexicon::new(domain.clone());
        let mut p = BTreeMap::new();
        for _ in 0..r.gen_range(0..=max_words) {
            let source = format!("s{}", r.gen_range(0..max_words.max(1)));
            for _ in 0..r.gen_range(1..=max_translations) {
                let target = format!("t{}", r.gen_range(0..8));
                lex.add(&source, &target, r.gen_range(1..5));
                p.entry(source.clone())
                    .or_insert_with(BTreeSet::new)
                    .insert(target);
            }
        }
        lexicons.insert(domain.clone(), lex);
        plain.insert(domain, p);
    }
    (lexicons, plain)
}

/// Brute force over every (domain, source, candidate target, other domain).
pub fn oracle_ambiguous(lex: &PlainLexicons) -> OracleVocab {
    let all_sources: BTreeSet<&String> = lex.values().flat_map(|m| m.keys()).collect();
    let all_targets: BTreeSet<&String> = lex.values().flat_map(|m| m.values().flatten()).collect();
    let empty = BTreeSet::new();
    let mut out = OracleVocab::new();
    for (d, own) in lex {
        let mut vocab = BTreeMap::new();
        for s in &all_sources {
            let expected = own.get(*s).unwrap_or(&empty);
            if expected.is_empty() {
                continue;
            }
            let mut distractors = BTreeSet::new();
            for t in &all_targets {
                for (other, theirs) in lex {
                    let theirs_has = theirs.get(*s).is_some_and(|ts| ts.contains(*t));
                    if other != d && theirs_has && !expected.contains(*t) {
                        distractors.insert(((*t).clone(), other.clone()));
                    }
                }
            }
            if !distractors.is_empty() {
                vocab.insert((*s).clone(), (expected.clone(), distractors));
            }
        }
        out.insert(d.clone(), vocab);
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<String>, usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *m.entry(tokens[i..i + n].to_vec()).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU written directly from the definition: clipped n-gram
/// precision for n = 1..4, exponential smoothing of zero counts, geometric
/// mean, brevity penalty.
pub fn naive_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut c, mut r) = (0usize, 0usize);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(rf, n);
            for (g, k) in &hc {
                matched[n - 1] += (*k).min(*rc.get(g).unwrap_or(&0));
                total[n - 1] += k;
            }
        }
    }
    if c == 0 || total.contains(&0) {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut k = 0;
    for n in 0..4 {
        let p = if matched[n] == 0 {
            k += 1;
            1.0 / (2f64.powi(k) * total[n] as f64)
        } else {
            matched[n] as f64 / total[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * (log_sum / 4.0).exp()
}

const WORDS: [&str; 12] = [
    "the", "cat", "sat", "on", "mat", "a", "dog", "ran", "to", "park", "big", "red",
];

pub fn random_sentence(r: &mut impl Rng, min: usize, max: usize) -> Vec<String> {
    (0..r.gen_range(min..=max))
        .map(|_| WORDS.choose(r).unwrap().to_string())
        .collect()
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

pub fn golden_context() -> PromptContext {
    let tokens: Vec<String> = [
        "It", "'s", "clear", "he", "does", "n't", "have", "any", "power", ".",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    PromptContext {
        source_sentence: "It's clear he doesn't have any power.".into(),
        source_tokens: tokens,
        target_language: "Chinese".into(),
        domain: Some("news".into()),
        word_domain_tags: Some(BTreeMap::from([(8, "news".to_string())])),
        few_shot_examples: Some(vec![
            FewShotExample {
                source: "The court rejected the appeal.".into(),
                target: "法院驳回了上诉。".into(),
                domain: Some("laws".into()),
            },
            FewShotExample {
                source: "Solar power is renewable.".into(),
                target: "太阳能是可再生的。".into(),
                domain: Some("science".into()),
            },
        ]),
        candidate_domains: ["education", "laws", "news", "science", "spoken"]
            .map(String::from)
            .to_vec(),
        prior_hypothesis: None,
    }
}

pub const GOLDEN_HYPOTHESIS: &str = "很明显他没有任何权力。";

/// The bytes stored in `golden/T<n>.txt`: the render, and for reflection
/// strategies the full two-turn exchange after a separator line.
pub fn golden_text(
    render: impl Fn(TemplateId, &PromptContext) -> RenderedPrompt,
    id: TemplateId,
) -> String {
    let ctx = golden_context();
    let mut s = render(id, &ctx).to_text();
    if id.is_reflection() {
        let with_prior = PromptContext {
            prior_hypothesis: Some(GOLDEN_HYPOTHESIS.into()),
            ..ctx
        };
        s.push_str("-----\n");
        s.push_str(&render(id, &with_prior).to_text());
    }
    s
}

/// Removes every domain insertion the domain-aware strategies make:
/// `Domain: <d>.` lines and ` in the <d> domain` phrases.
pub fn strip_domain(text: &str, domains: &[String]) -> String {
    let mut s = text.to_string();
    for d in domains {
        s = s.replace(&format!("Domain: {d}.\n"), "");
        s = s.replace(&format!(" in the {d} domain"), "");
    }
    s
}

pub const DOMAIN_POOL: [&str; 6] = ["education", "laws", "news", "science", "spoken", "medical"];

pub fn random_context(r: &mut impl Rng) -> PromptContext {
    let pick = |r: &mut ChaCha8Rng| DOMAIN_POOL.choose(r).unwrap().to_string();
    let mut local = ChaCha8Rng::seed_from_u64(r.gen());
    let tokens = random_sentence(&mut local, 1, 12);
    let examples = (0..local.gen_range(1..4))
        .map(|_| FewShotExample {
            source: random_sentence(&mut local, 1, 8).join(" "),
            target: random_sentence(&mut local, 1, 8).join(" "),
            domain: Some(pick(&mut local)),
        })
        .collect();
    PromptContext {
        source_sentence: tokens.join(" "),
        source_tokens: tokens,
        target_language: ["Chinese", "German", "English"]
            .choose(&mut local)
            .unwrap()
            .to_string(),
        domain: Some(pick(&mut local)),
        word_domain_tags: None,
        few_shot_examples: Some(examples),
        candidate_domains: Vec::new(),
        prior_hypothesis: local
            .gen_bool(0.5)
            .then(|| random_sentence(&mut local, 1, 6).join(" ")),
    }
}

/// Domains a context mentions (target and few-shot examples).
pub fn context_domains(ctx: &PromptContext) -> Vec<String> {
    let mut d: BTreeSet<String> = ctx.domain.iter().cloned().collect();
    for ex in ctx.few_shot_examples.iter().flatten() {
        d.extend(ex.domain.iter().cloned());
    }
    d.into_iter().collect()
}

/// Partial Fisher-Yates, restated for checking the library sampler.
pub fn oracle_sample(seed: u64, n: usize, k: usize) -> Vec<usize> {
    let mut r = rng(seed);
    let mut v: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = r.gen_range(i..n);
        v.swap(i, j);
    }
    v.truncate(k);
    v
}

use ambig_core::ambiguity::AnnotatedOccurrence;
use ambig_core::metrics::EvalRecord;

pub fn record(line_no: usize, hypothesis: &str, reference: &str) -> EvalRecord {
    EvalRecord {
        line_no,
        domain: "science".into(),
        template: TemplateId::T1,
        source: "power".into(),
        reference: reference.into(),
        hypothesis: hypothesis.into(),
        error: None,
    }
}

pub fn power_occurrence(line_no: usize) -> AnnotatedOccurrence {
    AnnotatedOccurrence {
        domain: "science".into(),
        line_no,
        token_index: 0,
        source_word: "power".into(),
        expected: BTreeSet::from(["能量".to_string()]),
        distractors: BTreeSet::from(["权力".to_string()]),
    }
}

/// `lines` sentences, one ambiguous occurrence each. System A translates
/// the word correctly on `pct_a` percent of lines, system B on `pct_b`
/// percent; the rest use the distractor.
pub fn dominance_fixture(
    lines: usize,
    pct_a: usize,
    pct_b: usize,
) -> (Vec<EvalRecord>, Vec<EvalRecord>, Vec<AnnotatedOccurrence>) {
    let hyp = |ok: bool| {
        if ok {
            "能量 很 大"
        } else {
            "权力 很 大"
        }
    };
    let a = (1..=lines)
        .map(|i| record(i, hyp(i % 100 < pct_a), "能量 很 大"))
        .collect();
    let b = (1..=lines)
        .map(|i| record(i, hyp((i * 37) % 100 < pct_b), "能量 很 大"))
        .collect();
    let occ = (1..=lines).map(power_occurrence).collect();
    (a, b, occ)
}
