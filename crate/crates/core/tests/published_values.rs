use std::collections::BTreeMap;

use ambig_core::annotation::{alignment_accuracy, Label};
use ambig_core::metrics::{DisambSummary, ScoreFile};
use ambig_core::prompts::TemplateId;
use ambig_core::report::{aggregate, delta, Centi, Metric, DEFAULT_PAIRING};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

const DOMAINS: [&str; 5] = ["education", "laws", "news", "science", "spoken"];

fn file(
    t: TemplateId,
    domain: &str,
    bleu: Option<f64>,
    comet: Option<f64>,
    disamb_pct: Option<f64>,
) -> ScoreFile {
    ScoreFile {
        domain: domain.into(),
        template: t,
        bleu,
        comet,
        disamb: DisambSummary {
            m: 0,
            n: 0,
            accuracy: disamb_pct.map(|p| p / 100.0),
        },
        judge: None,
        bleu_signature: None,
        match_mode: None,
    }
}

#[test]
fn t1_average_bleu_and_comet() {
    let bleu = [33.14, 50.82, 30.04, 28.76, 19.20];
    let comet = [88.10, 88.94, 84.51, 84.82, 77.00];
    let files: Vec<_> = DOMAINS
        .iter()
        .zip(bleu.iter().zip(comet))
        .map(|(d, (b, c))| file(TemplateId::T1, d, Some(*b), Some(c), None))
        .collect();
    let table = aggregate(&files).unwrap();
    assert_eq!(
        table.avg(TemplateId::T1, Metric::Bleu).unwrap().to_string(),
        "32.39"
    );
    assert_eq!(
        table
            .avg(TemplateId::T1, Metric::Comet)
            .unwrap()
            .to_string(),
        "84.67"
    );
}

#[test]
fn education_bleu_delta() {
    let files = [
        file(TemplateId::T1, "education", Some(33.14), None, None),
        file(TemplateId::T5, "education", Some(33.46), None, None),
    ];
    let table = aggregate(&files).unwrap();
    let (rows, _) = delta(&table, &DEFAULT_PAIRING);
    let row = rows
        .iter()
        .find(|r| r.disamb == TemplateId::T5 && r.metric == Metric::Bleu)
        .unwrap();
    assert_eq!(row.domains["education"].unwrap().signed(), "+0.32");
}

#[test]
fn disambiguation_deltas() {
    let t1 = [39.68, 40.85, 46.89, 36.98, 42.88];
    let t5 = [42.56, 44.96, 47.69, 44.12, 43.65];
    let t6 = [36.36, 38.19, 45.11, 35.20, 40.56];
    let mut files = Vec::new();
    for (i, d) in DOMAINS.iter().enumerate() {
        files.push(file(TemplateId::T1, d, None, None, Some(t1[i])));
        files.push(file(TemplateId::T5, d, None, None, Some(t5[i])));
        files.push(file(TemplateId::T6, d, None, None, Some(t6[i])));
    }
    let table = aggregate(&files).unwrap();
    assert_eq!(table.avg(TemplateId::T1, Metric::Disamb), Some(Centi(4146)));
    assert_eq!(table.avg(TemplateId::T6, Metric::Disamb), Some(Centi(3908)));
    let (rows, _) = delta(&table, &DEFAULT_PAIRING);
    let t5_row = rows.iter().find(|r| r.disamb == TemplateId::T5).unwrap();
    let t6_row = rows.iter().find(|r| r.disamb == TemplateId::T6).unwrap();
    assert_eq!(t5_row.domains["education"].unwrap().signed(), "+2.88");
    assert_eq!(t5_row.avg.unwrap().signed(), "+3.14");
    assert_eq!(t6_row.avg.unwrap().signed(), "-2.38");
    assert_eq!(t6_row.domains["education"].unwrap().signed(), "-3.32");
}

#[test]
fn identical_rows_have_zero_deltas() {
    let mut files = Vec::new();
    for (i, d) in DOMAINS.iter().enumerate() {
        files.push(file(TemplateId::T2, d, Some(10.0 + i as f64), None, None));
        files.push(file(TemplateId::T7, d, Some(10.0 + i as f64), None, None));
    }
    let (rows, _) = delta(&aggregate(&files).unwrap(), &DEFAULT_PAIRING);
    assert_eq!(rows.len(), 1);
    assert!(rows[0]
        .domains
        .values()
        .all(|v| v.unwrap().signed() == "0.00"));
    assert_eq!(rows[0].avg.unwrap().signed(), "0.00");
}

#[test]
fn average_matches_recomputed_mean() {
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = r.gen_range(1..=5);
        let cells: Vec<f64> = (0..n).map(|_| r.gen_range(0.0..100.0)).collect();
        let files: Vec<_> = cells
            .iter()
            .enumerate()
            .map(|(i, v)| file(TemplateId::T3, DOMAINS[i], Some(*v), None, None))
            .collect();
        let table = aggregate(&files).unwrap();
        let oracle = cells
            .iter()
            .map(|v| (v * 100.0).round() / 100.0)
            .sum::<f64>()
            / n as f64;
        assert!((table.avg_exact(TemplateId::T3, Metric::Bleu).unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn appendix_education_row() {
    let labels: Vec<Label> = std::iter::repeat_n(Label::Correct, 89)
        .chain(std::iter::repeat_n(Label::PartiallyCorrect, 9))
        .chain(std::iter::repeat_n(Label::Incorrect, 2))
        .collect();
    let (rows, warnings) = alignment_accuracy(&BTreeMap::from([("education".to_string(), labels)]));
    assert!(warnings.is_empty());
    assert_eq!(rows["education"].percentages(), (89, 9, 2));
    let (c, p, i) = rows["education"].proportions();
    assert!((c + p + i - 1.0).abs() < 1e-9);
}
