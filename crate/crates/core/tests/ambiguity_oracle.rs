mod support;

use std::collections::BTreeSet;
use std::time::Instant;

use ambig_core::ambiguity::build_ambiguous_vocabulary;
use ambig_core::Execution;
use support::{oracle_ambiguous, random_lexicons, rng, OracleVocab};

fn as_oracle_shape(
    v: &std::collections::BTreeMap<String, ambig_core::ambiguity::AmbiguousVocabulary>,
) -> OracleVocab {
    v.iter()
        .map(|(d, voc)| {
            let entries = voc
                .entries
                .iter()
                .map(|(s, e)| {
                    let distractors: BTreeSet<(String, String)> = e
                        .distractors
                        .iter()
                        .map(|x| (x.word.clone(), x.origin.clone()))
                        .collect();
                    (s.clone(), (e.in_domain.clone(), distractors))
                })
                .collect();
            (d.clone(), entries)
        })
        .collect()
}

#[test]
fn matches_brute_force_on_random_lexicons() {
    let start = Instant::now();
    let mut r = rng(20240501);
    for i in 0..1000 {
        let (lex, plain) = random_lexicons(&mut r, 5, 50, 5);
        let exec = if i % 2 == 0 {
            Execution::Sequential
        } else {
            Execution::Parallel
        };
        let got = build_ambiguous_vocabulary(&lex, exec).unwrap();
        assert_eq!(as_oracle_shape(&got), oracle_ambiguous(&plain), "case {i}");
        for voc in got.values() {
            assert!(voc.entries.values().all(|e| e.is_valid()));
        }
    }
    assert!(
        start.elapsed().as_secs_f64() < 10.0,
        "took {:?}",
        start.elapsed()
    );
}

#[test]
fn sequential_and_parallel_agree() {
    let mut r = rng(5);
    for _ in 0..50 {
        let (lex, _) = random_lexicons(&mut r, 5, 50, 5);
        assert_eq!(
            build_ambiguous_vocabulary(&lex, Execution::Sequential).unwrap(),
            build_ambiguous_vocabulary(&lex, Execution::Parallel).unwrap()
        );
    }
}
