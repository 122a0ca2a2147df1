//! `pipeline all`: corpus → lexicons → ambiguous vocabularies → annotated
//! test sets → review queue → runs → scores → significance → report.
//!
//! Stages run in order. Each stage reads the published artifacts of the
//! stages before it, so every artifact is exercised through its import
//! path. A stage is skipped when its stamp still matches the config and
//! the checksums of its inputs and outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ambig_core::annotation::{attach_examples, enqueue_samples, items_to_jsonl};
use ambig_core::corpus::{Corpus, Manifest};
use ambig_core::prompts::{Catalog, TemplateId};
use ambig_core::report::{Format, Metric};
use ambig_core::Execution;
use ambig_llm::runner::records_to_jsonl;
use ambig_llm::{run_strategy, ChatBackend, RetryPolicy, RunOptions};
use serde::Serialize;

use crate::commands::{self as cmd, ExtraScorers, LEXICON_FILE, RAW_LEXICON_FILE};
use crate::config::Resolved;
use crate::error::{Classify, CliError, CliResult};
use crate::stamp::{partial_path, InputDigest, StageWriter, Stamp};

/// Examples attached to each review item.
const REVIEW_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PipelineSummary {
    pub executed: Vec<String>,
    pub skipped: Vec<String>,
    pub report: PathBuf,
}

pub fn report_file_name(format: Format) -> &'static str {
    match format {
        Format::Markdown => "report.md",
        Format::Csv => "report.csv",
        Format::Json => "report.json",
    }
}

pub fn run_file(t: TemplateId, domain: &str) -> String {
    format!("runs/{t}.{domain}.jsonl")
}

pub fn score_file(t: TemplateId, domain: &str) -> String {
    format!("scores/{t}.{domain}.json")
}

struct Stages<'a> {
    out: &'a Path,
    config_checksum: &'a str,
    force: bool,
    summary: PipelineSummary,
}

impl<'a> Stages<'a> {
    /// Decides whether `stage` must run. When it must, stale partial
    /// outputs from an interrupted run with different inputs are removed;
    /// partials from an interrupted run with the same inputs are kept so
    /// that resumable stages can pick them up.
    fn begin(
        &mut self,
        stage: &str,
        input: &str,
        outputs: &[String],
    ) -> CliResult<Option<StageWriter<'a>>> {
        if !self.force {
            if let Some(stamp) = Stamp::read(self.out, stage) {
                if stamp.is_current(self.out, self.config_checksum, input) {
                    tracing::info!(stage, "up to date, skipped");
                    self.summary.skipped.push(stage.to_string());
                    return Ok(None);
                }
            }
        }
        let marker = pending_marker(self.out, stage);
        let resumable = !self.force && std::fs::read_to_string(&marker).is_ok_and(|m| m == input);
        if !resumable {
            for rel in outputs {
                let p = partial_path(&self.out.join(rel));
                if p.exists() {
                    std::fs::remove_file(&p).in_stage(stage, &p)?;
                }
            }
        }
        cmd::write_text(&marker, input).in_stage(stage, &marker)?;
        tracing::info!(stage, "running");
        Ok(Some(StageWriter::new(
            self.out,
            stage,
            self.config_checksum,
            input,
        )))
    }

    fn finish(&mut self, stage: &str, writer: StageWriter<'a>) -> CliResult<()> {
        let stamp_path = Stamp::path(self.out, stage);
        writer.commit().in_stage(stage, &stamp_path)?;
        let marker = pending_marker(self.out, stage);
        let _ = std::fs::remove_file(marker);
        self.summary.executed.push(stage.to_string());
        Ok(())
    }
}

fn pending_marker(out: &Path, stage: &str) -> PathBuf {
    out.join("stamps")
        .join(format!("{}.pending", stage.replace(':', "-")))
}

fn corpus_digest(manifest_path: &Path) -> anyhow::Result<String> {
    let manifest = Manifest::from_path(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut d = InputDigest::new();
    d.file("manifest", manifest_path)?;
    for (i, f) in manifest.files(base).iter().enumerate() {
        d.file(&format!("file{i:04}"), f)?;
    }
    Ok(d.finish())
}

fn digest_files(d: &mut InputDigest, out: &Path, rels: &[String]) -> anyhow::Result<()> {
    for rel in rels {
        d.file(rel, &out.join(rel))?;
    }
    Ok(())
}

/// Lazily built backend: a run whose stages are all current never needs
/// credentials.
struct LazyBackend<'a> {
    cfg: &'a Resolved,
    backend: Option<Box<dyn ChatBackend>>,
}

impl LazyBackend<'_> {
    fn get(&mut self) -> CliResult<&dyn ChatBackend> {
        if self.backend.is_none() {
            let spec = &self.cfg.config.backend;
            let b = cmd::make_backend(
                spec.kind,
                spec.mock_dictionary.clone(),
                spec.mock_fallback,
                Duration::from_secs(spec.timeout_secs),
            )
            .invalid()?;
            self.backend = Some(b);
        }
        Ok(self.backend.as_deref().expect("backend just built"))
    }
}

/// Runs every stage. `force` reruns stages whose stamps are current.
pub async fn pipeline_all(
    cfg: &Resolved,
    force: bool,
    exec: Execution,
) -> CliResult<PipelineSummary> {
    let corpus = cmd::open_corpus(&cfg.manifest).invalid()?;
    let catalog = match &cfg.catalog {
        Some(p) => Catalog::from_path(p).invalid()?,
        None => Catalog::builtin(),
    };
    let c = &cfg.config;
    let stop = cmd::stopwords(
        cfg.stopwords.as_deref(),
        &corpus.source_lang,
        c.lexicon.casefold,
    )
    .invalid()?;
    let corpus_sum = corpus_digest(&cfg.manifest).invalid()?;
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).in_stage("setup", out)?;

    let mut st = Stages {
        out,
        config_checksum: &cfg.checksum,
        force,
        summary: PipelineSummary::default(),
    };
    let mut backend = LazyBackend { cfg, backend: None };
    let domains: Vec<String> = corpus.domains.iter().map(|d| d.id.clone()).collect();
    let lex_rel = format!("lexicon/{LEXICON_FILE}");
    let raw_rel = format!("lexicon/{RAW_LEXICON_FILE}");
    let vocab_rels: Vec<String> = domains
        .iter()
        .map(|d| format!("vocab/{}", cmd::vocab_file_name(d)))
        .collect();
    let ann_rels: Vec<String> = domains
        .iter()
        .map(|d| format!("annotations/{}", cmd::annotation_file_name(d)))
        .collect();

    // Lexicons.
    let stage = "lexicon";
    let mut d = InputDigest::new();
    d.value("corpus", &corpus_sum);
    if let Some(p) = &cfg.stopwords {
        d.file("stopwords", p).invalid()?;
    }
    if let Some(mut w) = st.begin(stage, &d.finish(), &[lex_rel.clone(), raw_rel.clone()])? {
        let filtered = cmd::lexicons(
            &corpus,
            c.lexicon.casefold,
            c.lexicon.min_count,
            &stop,
            exec,
        );
        let raw = cmd::lexicons(&corpus, c.lexicon.casefold, 1, &stop, exec);
        w.write(&lex_rel, cmd::lexicons_to_tsv(&filtered).as_bytes())
            .in_stage(stage, out.join(&lex_rel))?;
        w.write(&raw_rel, cmd::lexicons_to_tsv(&raw).as_bytes())
            .in_stage(stage, out.join(&raw_rel))?;
        st.finish(stage, w)?;
    }

    // Ambiguous vocabularies.
    let stage = "vocab";
    let mut d = InputDigest::new();
    digest_files(&mut d, out, std::slice::from_ref(&lex_rel))
        .in_stage(stage, out.join(&lex_rel))?;
    if let Some(mut w) = st.begin(stage, &d.finish(), &vocab_rels)? {
        let lexicons =
            cmd::read_lexicons(&out.join(&lex_rel)).in_stage(stage, out.join(&lex_rel))?;
        let lexicons = with_all_domains(lexicons, &corpus);
        let vocab = cmd::vocabularies(&lexicons, exec).in_stage(stage, out.join("vocab"))?;
        for (domain, rel) in domains.iter().zip(&vocab_rels) {
            w.write(rel, vocab[domain].to_json().as_bytes())
                .in_stage(stage, out.join(rel))?;
        }
        st.finish(stage, w)?;
    }

    // Annotated test sets.
    let stage = "annotate";
    let mut d = InputDigest::new();
    d.value("corpus", &corpus_sum);
    digest_files(&mut d, out, &vocab_rels).in_stage(stage, out.join("vocab"))?;
    if let Some(mut w) = st.begin(stage, &d.finish(), &ann_rels)? {
        for (vrel, arel) in vocab_rels.iter().zip(&ann_rels) {
            let vocab = cmd::read_vocab(&out.join(vrel)).in_stage(stage, out.join(vrel))?;
            let occ = cmd::annotate_domain(&corpus, &vocab, c.lexicon.casefold)
                .in_stage(stage, out.join(arel))?;
            let body = ambig_core::ambiguity::occurrences_to_jsonl(&occ);
            w.write(arel, body.as_bytes())
                .in_stage(stage, out.join(arel))?;
        }
        st.finish(stage, w)?;
    }
    let mut annotations = Vec::new();
    for rel in &ann_rels {
        annotations
            .extend(cmd::read_annotations(&out.join(rel)).in_stage("annotate", out.join(rel))?);
    }

    // Alignment review queue.
    let stage = "review";
    let review_rel = "review/items.jsonl".to_string();
    let mut d = InputDigest::new();
    d.value("corpus", &corpus_sum);
    digest_files(&mut d, out, std::slice::from_ref(&lex_rel))
        .in_stage(stage, out.join(&lex_rel))?;
    if let Some(mut w) = st.begin(stage, &d.finish(), std::slice::from_ref(&review_rel))? {
        let lexicons =
            cmd::read_lexicons(&out.join(&lex_rel)).in_stage(stage, out.join(&lex_rel))?;
        let lexicons = with_all_domains(lexicons, &corpus);
        let (mut items, warnings) =
            enqueue_samples(&lexicons, c.review_sample_size, c.seeds.sampling)
                .in_stage(stage, out.join(&review_rel))?;
        for warning in warnings {
            tracing::warn!(stage, %warning);
        }
        attach_examples(&mut items, &corpus, c.lexicon.casefold, REVIEW_EXAMPLES);
        w.write(&review_rel, items_to_jsonl(&items).as_bytes())
            .in_stage(stage, out.join(&review_rel))?;
        st.finish(stage, w)?;
    }

    // Strategy runs.
    for &t in &c.templates {
        let stage = format!("run:{t}");
        let rels: Vec<String> = domains.iter().map(|dm| run_file(t, dm)).collect();
        let mut d = InputDigest::new();
        d.value("corpus", &corpus_sum)
            .value("catalog", catalog.checksum());
        if t == TemplateId::T6 {
            digest_files(&mut d, out, &ann_rels).in_stage(&stage, out.join("annotations"))?;
        }
        let Some(mut w) = st.begin(&stage, &d.finish(), &rels)? else {
            continue;
        };
        let backend = backend.get()?;
        for (dom, rel) in corpus.domains.iter().zip(&rels) {
            let target = out.join(rel);
            let ann = (t == TemplateId::T6).then_some(annotations.as_slice());
            let (items, warnings) =
                cmd::run_items(&corpus, dom, t, ann, c.seeds.few_shot, c.few_shot_k)
                    .in_stage(&stage, &target)?;
            for warning in warnings {
                tracing::warn!(stage, %warning);
            }
            let staging = w.staging(rel);
            if let Some(dir) = staging.parent() {
                std::fs::create_dir_all(dir).in_stage(&stage, dir)?;
            }
            let opts = RunOptions {
                template: t,
                generation: c.generation.clone(),
                retry: RetryPolicy::default(),
                parallelism: c.backend.parallelism,
                checkpoint: Some(staging),
                max_failure_ratio: 0.5,
            };
            let records = run_strategy(backend, &catalog, &items, &opts)
                .await
                .in_stage(&stage, &target)?;
            w.write(rel, records_to_jsonl(&records).as_bytes())
                .in_stage(&stage, &target)?;
        }
        st.finish(&stage, w)?;
    }

    // Scores.
    let extra_timeout = Duration::from_secs(c.backend.timeout_secs);
    for &t in &c.templates {
        let stage = format!("score:{t}");
        let runs: Vec<String> = domains.iter().map(|dm| run_file(t, dm)).collect();
        let rels: Vec<String> = domains.iter().map(|dm| score_file(t, dm)).collect();
        let mut d = InputDigest::new();
        digest_files(&mut d, out, &runs).in_stage(&stage, out.join("runs"))?;
        digest_files(&mut d, out, &ann_rels).in_stage(&stage, out.join("annotations"))?;
        let Some(mut w) = st.begin(&stage, &d.finish(), &rels)? else {
            continue;
        };
        let judge_backend = if c.metrics.judge {
            Some(backend.get()?)
        } else {
            None
        };
        let extra = ExtraScorers {
            judge: judge_backend.map(|b| (b, &c.generation, c.backend.parallelism)),
            scorer_url: c.metrics.scorer_url.as_deref(),
            timeout: extra_timeout,
        };
        for (run_rel, rel) in runs.iter().zip(&rels) {
            let target = out.join(rel);
            let records =
                cmd::eval_records(&cmd::read_run(&out.join(run_rel)).in_stage(&stage, &target)?);
            let (score, warnings) = cmd::score_run(
                &records,
                &annotations,
                &corpus.target_lang,
                c.metrics.mode,
                &extra,
                exec,
            )
            .await
            .in_stage(&stage, &target)?;
            for warning in warnings {
                tracing::warn!(stage, %warning);
            }
            w.write(rel, score.to_json().as_bytes())
                .in_stage(&stage, &target)?;
        }
        st.finish(&stage, w)?;
    }

    // Significance of each configured pair.
    let stage = "significance";
    let sig_rel = "significance.json".to_string();
    let pairs: Vec<_> = cfg
        .pairing
        .iter()
        .copied()
        .filter(|(x, base)| c.templates.contains(x) && c.templates.contains(base))
        .collect();
    let mut d = InputDigest::new();
    for (x, base) in &pairs {
        let rels: Vec<String> = domains
            .iter()
            .flat_map(|dm| [run_file(*x, dm), run_file(*base, dm)])
            .collect();
        digest_files(&mut d, out, &rels).in_stage(stage, out.join("runs"))?;
    }
    digest_files(&mut d, out, &ann_rels).in_stage(stage, out.join("annotations"))?;
    if let Some(mut w) = st.begin(stage, &d.finish(), std::slice::from_ref(&sig_rel))? {
        let target = out.join(&sig_rel);
        let mut rows = Vec::new();
        for (x, base) in &pairs {
            for dm in &domains {
                let a = cmd::eval_records(
                    &cmd::read_run(&out.join(run_file(*x, dm))).in_stage(stage, &target)?,
                );
                let b = cmd::eval_records(
                    &cmd::read_run(&out.join(run_file(*base, dm))).in_stage(stage, &target)?,
                );
                let own = annotations.iter().any(|o| &o.domain == dm);
                for metric in [Metric::Bleu, Metric::Disamb] {
                    if metric == Metric::Disamb && !own {
                        continue;
                    }
                    let result = cmd::significance(
                        &a,
                        &b,
                        metric,
                        &annotations,
                        &corpus.target_lang,
                        c.metrics.mode,
                        c.metrics.resamples,
                        c.seeds.bootstrap,
                        exec,
                    )
                    .in_stage(stage, &target)?;
                    rows.push(SignificanceRow {
                        pair: format!("{x}-{base}"),
                        domain: dm.clone(),
                        result,
                    });
                }
            }
        }
        let mut body = serde_json::to_string_pretty(&rows).in_stage(stage, &target)?;
        body.push('\n');
        w.write(&sig_rel, body.as_bytes())
            .in_stage(stage, &target)?;
        st.finish(stage, w)?;
    }

    // Report.
    let stage = "report";
    let report_rel = report_file_name(cfg.format).to_string();
    let score_rels: Vec<String> = c
        .templates
        .iter()
        .flat_map(|t| domains.iter().map(move |dm| score_file(*t, dm)))
        .collect();
    let mut d = InputDigest::new();
    digest_files(&mut d, out, &score_rels).in_stage(stage, out.join("scores"))?;
    if let Some(mut w) = st.begin(stage, &d.finish(), std::slice::from_ref(&report_rel))? {
        let target = out.join(&report_rel);
        let scores = score_rels
            .iter()
            .map(|rel| cmd::read_score_file(&out.join(rel)))
            .collect::<anyhow::Result<Vec<_>>>()
            .in_stage(stage, &target)?;
        let (text, warnings) =
            cmd::render_report(&scores, &cfg.pairing, cfg.format).in_stage(stage, &target)?;
        for warning in warnings {
            tracing::warn!(stage, %warning);
        }
        w.write(&report_rel, text.as_bytes())
            .in_stage(stage, &target)?;
        st.finish(stage, w)?;
    }

    let mut summary = st.summary;
    summary.report = out.join(report_rel);
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct SignificanceRow {
    pair: String,
    domain: String,
    #[serde(flatten)]
    result: ambig_core::metrics::SignificanceResult,
}

/// A domain whose lexicon filtered down to nothing has no TSV rows; it
/// still takes part in ambiguity construction as an empty lexicon.
fn with_all_domains(
    mut lexicons: BTreeMap<String, ambig_core::lexicon::DomainLexicon>,
    corpus: &Corpus,
) -> BTreeMap<String, ambig_core::lexicon::DomainLexicon> {
    for dm in &corpus.domains {
        lexicons
            .entry(dm.id.clone())
            .or_insert_with(|| ambig_core::lexicon::DomainLexicon::new(dm.id.clone()));
    }
    lexicons
}

/// Loads, validates and resolves a config file.
pub fn load_config(path: &Path, output_override: Option<&Path>) -> CliResult<Resolved> {
    let mut config = crate::config::PipelineConfig::load(path).invalid()?;
    if let Some(o) = output_override {
        let cwd = std::env::current_dir().invalid()?;
        config.output_dir = cwd.join(o);
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    config.resolve(base).map_err(CliError::Validation)
}
