use std::collections::BTreeMap;

use ambig_core::ambiguity::build_ambiguous_vocabulary;
use ambig_core::corpus::Lang;
use ambig_core::lexicon::DomainLexicon;
use ambig_core::metrics::{corpus_bleu_with, paired_bootstrap, BleuMetric, EvalRecord};
use ambig_core::prompts::TemplateId;
use ambig_core::sampling::rng;
use ambig_core::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn sentence(r: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| format!("w{}", r.gen_range(0..40)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn records(n: usize, seed: u64) -> Vec<EvalRecord> {
    let mut r = rng(seed);
    (1..=n)
        .map(|line_no| {
            let len = r.gen_range(8..30);
            EvalRecord {
                line_no,
                domain: "news".into(),
                template: TemplateId::T1,
                source: String::new(),
                reference: sentence(&mut r, len),
                hypothesis: sentence(&mut r, len),
                error: None,
            }
        })
        .collect()
}

fn lexicons(domains: usize, words: usize) -> BTreeMap<String, DomainLexicon> {
    let mut r = rng(3);
    (0..domains)
        .map(|d| {
            let mut lex = DomainLexicon::new(format!("d{d}"));
            for w in 0..words {
                for _ in 0..r.gen_range(1..4) {
                    lex.add(&format!("s{w}"), &format!("t{}", r.gen_range(0..6)), 1);
                }
            }
            (lex.domain.clone(), lex)
        })
        .collect()
}

fn bench(c: &mut Criterion) {
    let en = Lang::new("en").unwrap();
    let a = records(500, 1);
    let b = records(500, 2);
    let lex = lexicons(5, 20_000);

    let mut g = c.benchmark_group("bootstrap_500x1000");
    g.sample_size(10);
    for (name, exec) in MODES {
        let metric = BleuMetric {
            target_lang: en.clone(),
            exec,
        };
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| paired_bootstrap(&a, &b, &metric, 1000, 7, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("corpus_bleu_500");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| corpus_bleu_with(&a, &en, exec))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("ambiguous_vocabulary_5x20k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bch| {
            bch.iter(|| build_ambiguous_vocabulary(&lex, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
