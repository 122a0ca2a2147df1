//! Building blocks shared by the individual subcommands and `pipeline all`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use ambig_core::ambiguity::{
    annotate_test_set, build_ambiguous_vocabulary, occurrences_from_jsonl, AmbiguousVocabulary,
    AnnotatedOccurrence,
};
use ambig_core::corpus::{load_corpus, Corpus, Domain, Lang};
use ambig_core::lexicon::{
    build_lexicons, default_stopwords, filter_lexicon, from_tsv, to_tsv, DomainLexicon,
};
use ambig_core::metrics::{
    bleu_signature, corpus_bleu_with, disambiguation_accuracy, paired_bootstrap, BleuMetric,
    DisambMetric, EvalRecord, MatchMode, ScoreFile, SignificanceResult,
};
use ambig_core::prompts::{sample_few_shot, PromptContext, TemplateId};
use ambig_core::report::{aggregate, delta, emit, Format, Metric, Pair, ReportMeta};
use ambig_core::sampling::derive_seed;
use ambig_core::text::normalize_word;
use ambig_core::Execution;
use ambig_llm::judge::{external_score, gpt_judge, mean_score};
use ambig_llm::runner::records_from_jsonl;
use ambig_llm::{
    ChatBackend, GenerationConfig, HttpBackend, MockBackend, MockFallback, RetryPolicy, RunItem,
    RunRecord,
};
use anyhow::{anyhow, bail, Context};

use crate::config::BackendKind;

pub const LEXICON_FILE: &str = "lexicon.tsv";
pub const RAW_LEXICON_FILE: &str = "lexicon.raw.tsv";

pub fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn open_corpus(manifest: &Path) -> anyhow::Result<Corpus> {
    load_corpus(manifest).with_context(|| format!("loading corpus from {}", manifest.display()))
}

/// Finds a domain by id or, ignoring case, by display name.
pub fn resolve_domain<'c>(corpus: &'c Corpus, name: &str) -> anyhow::Result<&'c Domain> {
    corpus
        .domains
        .iter()
        .find(|d| d.id == name)
        .or_else(|| {
            corpus
                .domains
                .iter()
                .find(|d| d.display_name.eq_ignore_ascii_case(name))
        })
        .ok_or_else(|| {
            let known: Vec<&str> = corpus.domains.iter().map(|d| d.id.as_str()).collect();
            anyhow!("unknown domain `{name}` (corpus has {})", known.join(", "))
        })
}

/// Parses `<manifest>:<domain>`. The split is on the last colon so that
/// Windows drive letters survive.
pub fn split_manifest_domain(spec: &str) -> anyhow::Result<(PathBuf, String)> {
    let (m, d) = spec
        .rsplit_once(':')
        .filter(|(m, d)| !m.is_empty() && !d.is_empty())
        .ok_or_else(|| anyhow!("expected <manifest>:<domain>, got `{spec}`"))?;
    Ok((PathBuf::from(m), d.to_string()))
}

/// Stopwords from a file (one per line) or the built-in list.
pub fn stopwords(
    path: Option<&Path>,
    source_lang: &Lang,
    casefold: bool,
) -> anyhow::Result<BTreeSet<String>> {
    match path {
        Some(p) => Ok(read_text(p)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| normalize_word(l, casefold))
            .collect()),
        None => Ok(default_stopwords(source_lang.code())),
    }
}

/// Per-domain lexicons after filtering.
pub fn lexicons(
    corpus: &Corpus,
    casefold: bool,
    min_count: u64,
    stop: &BTreeSet<String>,
    exec: Execution,
) -> BTreeMap<String, DomainLexicon> {
    build_lexicons(corpus, casefold, exec)
        .into_iter()
        .map(|(d, lex)| {
            let filtered = filter_lexicon(&lex, min_count, stop);
            (d, filtered)
        })
        .collect()
}

pub fn lexicons_to_tsv(lexicons: &BTreeMap<String, DomainLexicon>) -> String {
    lexicons.values().map(to_tsv).collect()
}

pub fn read_lexicons(path: &Path) -> anyhow::Result<BTreeMap<String, DomainLexicon>> {
    from_tsv(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn vocab_file_name(domain: &str) -> String {
    format!("{domain}.vocab.json")
}

pub fn annotation_file_name(domain: &str) -> String {
    format!("{domain}.jsonl")
}

pub fn vocabularies(
    lexicons: &BTreeMap<String, DomainLexicon>,
    exec: Execution,
) -> anyhow::Result<BTreeMap<String, AmbiguousVocabulary>> {
    Ok(build_ambiguous_vocabulary(lexicons, exec)?)
}

pub fn read_vocab(path: &Path) -> anyhow::Result<AmbiguousVocabulary> {
    AmbiguousVocabulary::from_json(&read_text(path)?)
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn annotate_domain(
    corpus: &Corpus,
    vocab: &AmbiguousVocabulary,
    casefold: bool,
) -> anyhow::Result<Vec<AnnotatedOccurrence>> {
    Ok(annotate_test_set(
        corpus.test_pairs(&vocab.domain),
        vocab,
        casefold,
    )?)
}

pub fn read_annotations(path: &Path) -> anyhow::Result<Vec<AnnotatedOccurrence>> {
    occurrences_from_jsonl(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Prompt inputs for every test sentence of `domain`.
///
/// Domains appear in prompts under their display names. Word tags (T6)
/// come from `annotations`; few-shot examples (T3, T9) are drawn from the
/// domain's training pairs with a per-sentence seed, so T3 and T9 see the
/// same examples.
pub fn run_items(
    corpus: &Corpus,
    domain: &Domain,
    template: TemplateId,
    annotations: Option<&[AnnotatedOccurrence]>,
    few_shot_seed: u64,
    k: usize,
) -> anyhow::Result<(Vec<RunItem>, Vec<String>)> {
    if template == TemplateId::T6 && annotations.is_none() {
        bail!("{template} needs annotations to tag ambiguous words");
    }
    let mut tags: BTreeMap<usize, BTreeMap<usize, String>> = BTreeMap::new();
    for occ in annotations
        .unwrap_or_default()
        .iter()
        .filter(|o| o.domain == domain.id)
    {
        tags.entry(occ.line_no)
            .or_default()
            .insert(occ.token_index, domain.display_name.clone());
    }
    let candidates: Vec<String> = corpus
        .domains
        .iter()
        .map(|d| d.display_name.clone())
        .collect();
    let train = corpus.train_pairs(&domain.id);
    let mut warnings = BTreeSet::new();
    let mut items = Vec::new();
    for pair in corpus.test_pairs(&domain.id) {
        let few_shot_examples = if template.is_few_shot() {
            let seed = derive_seed(few_shot_seed, &format!("{}:{}", domain.id, pair.line_no));
            let (mut ex, warn) = sample_few_shot(&train, k, seed, None)?;
            for e in &mut ex {
                e.domain = Some(domain.display_name.clone());
            }
            warnings.extend(warn);
            Some(ex)
        } else {
            None
        };
        let word_domain_tags =
            annotations.map(|_| tags.get(&pair.line_no).cloned().unwrap_or_default());
        items.push(RunItem {
            line_no: pair.line_no,
            domain: domain.id.clone(),
            source: pair.source_text.clone(),
            reference: pair.target_text.clone(),
            context: PromptContext {
                source_sentence: pair.source_text.clone(),
                source_tokens: pair.source_tokens.clone(),
                target_language: corpus.target_lang.display_name().to_string(),
                domain: Some(domain.display_name.clone()),
                word_domain_tags,
                few_shot_examples,
                candidate_domains: candidates.clone(),
                prior_hypothesis: None,
            },
        });
    }
    Ok((items, warnings.into_iter().collect()))
}

/// Reads a mock dictionary from TOML (`word = "translation"`) or JSON.
pub fn read_mock_dictionary(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let raw = read_text(path)?;
    let dict: BTreeMap<String, String> = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&raw)?
    } else {
        toml::from_str(&raw)?
    };
    if dict.is_empty() {
        bail!("mock dictionary {} is empty", path.display());
    }
    Ok(dict)
}

/// Builds a backend. `openai` reads its credential and base URL from the
/// environment only.
pub fn make_backend(
    kind: BackendKind,
    dictionary: BTreeMap<String, String>,
    fallback: MockFallback,
    timeout: Duration,
) -> anyhow::Result<Box<dyn ChatBackend>> {
    match kind {
        BackendKind::Mock => Ok(Box::new(MockBackend::new(dictionary, fallback))),
        BackendKind::Openai => Ok(Box::new(HttpBackend::from_env(timeout)?)),
    }
}

pub fn read_run(path: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let (records, bad) = records_from_jsonl(&read_text(path)?);
    if let Some(line) = bad.first() {
        bail!("{}: line {line} is not a run record", path.display());
    }
    if records.is_empty() {
        bail!("{} holds no records", path.display());
    }
    Ok(records)
}

pub fn eval_records(records: &[RunRecord]) -> Vec<EvalRecord> {
    records.iter().map(RunRecord::to_eval).collect()
}

/// The single (domain, template) a set of records belongs to.
pub fn run_identity(records: &[EvalRecord]) -> anyhow::Result<(String, TemplateId)> {
    let first = records.first().ok_or_else(|| anyhow!("no records"))?;
    if let Some(r) = records
        .iter()
        .find(|r| r.domain != first.domain || r.template != first.template)
    {
        bail!(
            "records mix ({}, {}) with ({}, {}); score one domain and template at a time",
            first.domain,
            first.template,
            r.domain,
            r.template
        );
    }
    Ok((first.domain.clone(), first.template))
}

/// Optional extra scorers.
pub struct ExtraScorers<'a> {
    pub judge: Option<(&'a dyn ChatBackend, &'a GenerationConfig, usize)>,
    pub scorer_url: Option<&'a str>,
    pub timeout: Duration,
}

impl ExtraScorers<'_> {
    pub fn none() -> Self {
        ExtraScorers {
            judge: None,
            scorer_url: None,
            timeout: Duration::from_secs(60),
        }
    }
}

/// Scores one (domain, template) run. Returns the score file and warnings.
pub async fn score_run(
    records: &[EvalRecord],
    annotations: &[AnnotatedOccurrence],
    target_lang: &Lang,
    mode: MatchMode,
    extra: &ExtraScorers<'_>,
    exec: Execution,
) -> anyhow::Result<(ScoreFile, Vec<String>)> {
    let (domain, template) = run_identity(records)?;
    let mut warnings = Vec::new();
    let bleu = match corpus_bleu_with(records, target_lang, exec) {
        Ok(b) => Some(b.score),
        Err(e) => {
            warnings.push(format!("no BLEU for {template}/{domain}: {e}"));
            None
        }
    };
    let own: Vec<AnnotatedOccurrence> = annotations
        .iter()
        .filter(|o| o.domain == domain)
        .cloned()
        .collect();
    let (disamb, w) = disambiguation_accuracy(records, &own, target_lang, mode);
    warnings.extend(w);
    let judge = match extra.judge {
        Some((backend, cfg, parallelism)) => {
            let (outcomes, summary) =
                gpt_judge(backend, records, cfg, &RetryPolicy::default(), parallelism).await;
            let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
            if failed > 0 {
                warnings.push(format!(
                    "judge failed on {failed} of {} records",
                    outcomes.len()
                ));
            }
            Some(summary)
        }
        None => None,
    };
    let comet = match extra.scorer_url {
        Some(url) => match external_score(records, url, extra.timeout).await {
            Ok(scores) => mean_score(&scores),
            Err(e) => {
                warnings.push(format!(
                    "external scorer unavailable, column left empty: {e}"
                ));
                None
            }
        },
        None => None,
    };
    Ok((
        ScoreFile {
            domain,
            template,
            bleu,
            comet,
            disamb: disamb.into(),
            judge,
            bleu_signature: Some(bleu_signature(target_lang)),
            match_mode: Some(mode),
        },
        warnings,
    ))
}

pub fn read_score_file(path: &Path) -> anyhow::Result<ScoreFile> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Every `*.json` score file in `dir`, in file-name order.
pub fn read_score_dir(dir: &Path) -> anyhow::Result<Vec<ScoreFile>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no score files in {}", dir.display());
    }
    paths.iter().map(|p| read_score_file(p)).collect()
}

/// Renders the report. Returns the text and warnings for skipped pairs.
pub fn render_report(
    scores: &[ScoreFile],
    pairing: &[Pair],
    format: Format,
) -> anyhow::Result<(String, Vec<String>)> {
    let table = aggregate(scores)?;
    let (rows, warnings) = delta(&table, pairing);
    let signatures: BTreeSet<&str> = scores
        .iter()
        .filter_map(|s| s.bleu_signature.as_deref())
        .collect();
    let modes: BTreeSet<&str> = scores
        .iter()
        .filter_map(|s| s.match_mode)
        .map(MatchMode::as_str)
        .collect();
    let meta = ReportMeta {
        bleu_signature: join_distinct(signatures),
        match_mode: join_distinct(modes),
    };
    Ok((emit(&table, &rows, &meta, format), warnings))
}

fn join_distinct(values: BTreeSet<&str>) -> Option<String> {
    (!values.is_empty()).then(|| values.into_iter().collect::<Vec<_>>().join(" / "))
}

/// Paired bootstrap between two runs of the same sentences.
#[allow(clippy::too_many_arguments)]
pub fn significance(
    a: &[EvalRecord],
    b: &[EvalRecord],
    metric: Metric,
    annotations: &[AnnotatedOccurrence],
    target_lang: &Lang,
    mode: MatchMode,
    resamples: usize,
    seed: u64,
    exec: Execution,
) -> anyhow::Result<SignificanceResult> {
    let result = match metric {
        Metric::Bleu => paired_bootstrap(
            a,
            b,
            &BleuMetric {
                target_lang: target_lang.clone(),
                exec,
            },
            resamples,
            seed,
            exec,
        )?,
        Metric::Disamb => {
            let domain = a.first().map(|r| r.domain.as_str()).unwrap_or_default();
            let own: Vec<AnnotatedOccurrence> = annotations
                .iter()
                .filter(|o| o.domain == domain)
                .cloned()
                .collect();
            if own.is_empty() {
                bail!("disambiguation significance needs annotations for domain `{domain}`");
            }
            paired_bootstrap(
                a,
                b,
                &DisambMetric {
                    annotations: &own,
                    target_lang: target_lang.clone(),
                    mode,
                },
                resamples,
                seed,
                exec,
            )?
        }
        Metric::Comet => bail!("significance is available for bleu and disamb only"),
    };
    Ok(result)
}
