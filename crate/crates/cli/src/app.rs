//! Argument parsing and subcommand dispatch.

use std::collections::BTreeMap;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Duration;

use ambig_annotate::{load_state, offline_store, serve, ServiceFiles};
use ambig_core::ambiguity::{ambiguity_stats, occurrences_to_jsonl};
use ambig_core::annotation::{
    alignment_accuracy, attach_examples, enqueue_samples, items_to_jsonl, Adjudication,
};
use ambig_core::corpus::Lang;
use ambig_core::metrics::MatchMode;
use ambig_core::prompts::{Catalog, FewShotExample, PromptContext, TemplateId};
use ambig_core::report::{parse_pairing, Format, Metric};
use ambig_core::Execution;
use ambig_llm::runner::records_to_jsonl;
use ambig_llm::{run_strategy, GenerationConfig, MockFallback, RetryPolicy, RunOptions};
use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};

use crate::commands::{self as cmd, ExtraScorers, LEXICON_FILE, RAW_LEXICON_FILE};
use crate::config::BackendKind;
use crate::error::{Classify, CliResult};
use crate::pipeline;
use crate::stamp::partial_path;

#[derive(Debug, Parser)]
#[command(
    name = "ambig",
    version,
    about = "Evaluate lexical disambiguation of LLM translation across domains"
)]
pub struct Cli {
    /// Emit logs as JSON lines on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: tracing::Level,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus checks.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Bilingual lexicon extraction.
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Cross-domain ambiguous vocabularies and test-set annotation.
    #[command(subcommand)]
    Ambiguity(AmbiguityCmd),
    /// Alignment review: sampling, the review service, accuracy.
    #[command(subcommand)]
    Annotate(AnnotateCmd),
    /// Prompt catalog inspection and rendering.
    #[command(subcommand)]
    Prompts(PromptsCmd),
    /// Run one strategy over one domain's test set.
    Run(RunArgs),
    /// Score a run file.
    Score(ScoreArgs),
    /// Paired bootstrap between two run files.
    Significance(SignificanceArgs),
    /// Build the score table and delta rows from score files.
    Report(ReportArgs),
    /// End-to-end pipeline.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Load and validate a corpus; print per-domain line counts.
    Validate { manifest: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum LexiconCmd {
    /// Extract per-domain lexicons into `<out>/lexicon.tsv` (filtered) and
    /// `<out>/lexicon.raw.tsv` (every pair seen at least once).
    Build {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = ambig_core::lexicon::DEFAULT_AMBIGUITY_MIN_COUNT)]
        min_count: u64,
        #[arg(long)]
        no_casefold: bool,
        /// One stopword per line; the built-in list otherwise.
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AmbiguityCmd {
    /// Build one ambiguous vocabulary per domain.
    Build {
        /// Directory holding `lexicon.tsv`, or the TSV itself.
        #[arg(long)]
        lexicons: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Annotate one domain's test set.
    Annotate {
        #[arg(long)]
        vocab: PathBuf,
        /// `<manifest>:<domain>`.
        #[arg(long)]
        test: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_casefold: bool,
    },
    /// Occurrence, word and sentence counts for the annotation files in a
    /// directory.
    Stats {
        dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCmd {
    /// Sample word pairs per domain into a review queue.
    Sample {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Attach training-sentence references from this corpus.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        no_casefold: bool,
    },
    /// Serve the review API.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        vocab: Vec<PathBuf>,
        /// Where `POST /refinements/apply` writes refined files.
        #[arg(long)]
        refined_dir: Option<PathBuf>,
        #[arg(long, default_value = "single")]
        adjudication: String,
    },
    /// Per-domain alignment accuracy from a journal.
    Accuracy {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        journal: PathBuf,
        #[arg(long, default_value = "single")]
        adjudication: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum PromptsCmd {
    /// Render one template for one sentence.
    Render {
        #[arg(long)]
        template: TemplateId,
        #[arg(long)]
        sentence: String,
        #[arg(long)]
        target: String,
        #[arg(long)]
        domain: Option<String>,
        /// Word tags as `index=Domain,...` over whitespace tokens.
        #[arg(long)]
        tags: Option<String>,
        /// Few-shot examples, JSON lines of `{source, target, domain?}`.
        #[arg(long)]
        examples: Option<PathBuf>,
        /// Comma-separated domain list offered to domain identification.
        #[arg(long)]
        candidates: Option<String>,
        /// First-turn output, to render a full reflection exchange.
        #[arg(long)]
        prior: Option<String>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Print the catalog, or one template's skeleton.
    Show {
        #[arg(long)]
        template: Option<TemplateId>,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub template: TemplateId,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Domain id or display name.
    #[arg(long)]
    pub domain: String,
    #[arg(long, value_parser = parse_backend)]
    pub backend: BackendKind,
    #[arg(long, default_value_t = 8)]
    pub parallelism: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Annotation file of the domain; required for T6.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Required for the few-shot strategies.
    #[arg(long)]
    pub few_shot_seed: Option<u64>,
    #[arg(long, default_value_t = ambig_core::prompts::DEFAULT_FEW_SHOT_K)]
    pub k: usize,
    /// Dictionary for the mock backend (TOML or JSON map).
    #[arg(long)]
    pub mock_dict: Option<PathBuf>,
    #[arg(long)]
    pub mock_drop_unknown: bool,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Discard `<out>.partial` instead of resuming from it.
    #[arg(long)]
    pub fresh: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value = "lenient")]
    pub mode: MatchMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Target language code; decides BLEU tokenization.
    #[arg(long, default_value = "zh")]
    pub target_lang: String,
    /// Also run the LLM judge on the configured endpoint.
    #[arg(long)]
    pub judge: bool,
    #[arg(long)]
    pub judge_model: Option<String>,
    /// Base URL of an external learned-metric scorer.
    #[arg(long)]
    pub scorer_url: Option<String>,
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct SignificanceArgs {
    #[arg(long)]
    pub run_a: PathBuf,
    #[arg(long)]
    pub run_b: PathBuf,
    #[arg(long, default_value = "bleu")]
    pub metric: Metric,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, default_value = "lenient")]
    pub mode: MatchMode,
    #[arg(long, default_value_t = ambig_core::metrics::DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "zh")]
    pub target_lang: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value = "default")]
    pub pairing: String,
    #[arg(long, default_value = "markdown")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCmd {
    /// Run every stage from manifest to report, skipping current stages.
    All {
        #[arg(long)]
        config: PathBuf,
        /// Rerun stages even when their stamps are current.
        #[arg(long)]
        force: bool,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_backend(s: &str) -> Result<BackendKind, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn parse_adjudication(s: &str) -> CliResult<Adjudication> {
    s.parse::<Adjudication>()
        .map_err(anyhow::Error::msg)
        .invalid()
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        tracing::warn!("{w}");
    }
}

fn write_output(path: &Path, body: &str) -> CliResult<()> {
    cmd::write_text(path, body).in_stage("write", path)
}

pub async fn run(cli: Cli) -> CliResult<()> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Corpus(CorpusCmd::Validate { manifest }) => {
            let corpus = cmd::open_corpus(&manifest).invalid()?;
            println!("domain\ttrain\ttest");
            for (d, train, test) in corpus.line_counts() {
                println!("{d}\t{train}\t{test}");
            }
            Ok(())
        }
        Command::Lexicon(LexiconCmd::Build {
            manifest,
            out,
            min_count,
            no_casefold,
            stopwords,
        }) => {
            if min_count == 0 {
                return Err(anyhow!("--min-count must be at least 1")).invalid();
            }
            let corpus = cmd::open_corpus(&manifest).invalid()?;
            let casefold = !no_casefold;
            let stop =
                cmd::stopwords(stopwords.as_deref(), &corpus.source_lang, casefold).invalid()?;
            let filtered = cmd::lexicons(&corpus, casefold, min_count, &stop, exec);
            let raw = cmd::lexicons(&corpus, casefold, 1, &stop, exec);
            write_output(&out.join(LEXICON_FILE), &cmd::lexicons_to_tsv(&filtered))?;
            write_output(&out.join(RAW_LEXICON_FILE), &cmd::lexicons_to_tsv(&raw))?;
            println!("domain\tpairs\tsource_words");
            for (d, lex) in &filtered {
                println!("{d}\t{}\t{}", lex.pair_count(), lex.entries.len());
            }
            Ok(())
        }
        Command::Ambiguity(AmbiguityCmd::Build { lexicons, out }) => {
            let path = if lexicons.is_dir() {
                lexicons.join(LEXICON_FILE)
            } else {
                lexicons
            };
            let lex = cmd::read_lexicons(&path).invalid()?;
            let vocab = cmd::vocabularies(&lex, exec).invalid()?;
            println!("domain\tambiguous_words");
            for (d, v) in &vocab {
                write_output(&out.join(cmd::vocab_file_name(d)), &v.to_json())?;
                println!("{d}\t{}", v.entries.len());
            }
            Ok(())
        }
        Command::Ambiguity(AmbiguityCmd::Annotate {
            vocab,
            test,
            out,
            no_casefold,
        }) => {
            let (manifest, domain) = cmd::split_manifest_domain(&test).invalid()?;
            let corpus = cmd::open_corpus(&manifest).invalid()?;
            let dom = cmd::resolve_domain(&corpus, &domain).invalid()?;
            let v = cmd::read_vocab(&vocab).invalid()?;
            if v.domain != dom.id {
                return Err(anyhow!(
                    "vocabulary is for `{}` but the test set is `{}`",
                    v.domain,
                    dom.id
                ))
                .invalid();
            }
            let occ = cmd::annotate_domain(&corpus, &v, !no_casefold).invalid()?;
            write_output(&out, &occurrences_to_jsonl(&occ))?;
            println!("{} occurrences", occ.len());
            Ok(())
        }
        Command::Ambiguity(AmbiguityCmd::Stats { dir, json }) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .invalid()?
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
                .collect();
            files.sort();
            let mut by_domain: BTreeMap<String, Vec<_>> = BTreeMap::new();
            for f in &files {
                for occ in cmd::read_annotations(f).invalid()? {
                    by_domain.entry(occ.domain.clone()).or_default().push(occ);
                }
            }
            let stats = ambiguity_stats(&by_domain);
            if json {
                println!("{}", serde_json::to_string_pretty(&stats).invalid()?);
            } else {
                println!("domain\toccurrences\twords\tsentences");
                for (d, s) in &stats {
                    println!(
                        "{d}\t{}\t{}\t{}",
                        s.occurrences, s.distinct_words, s.sentences
                    );
                }
            }
            Ok(())
        }
        Command::Annotate(AnnotateCmd::Sample {
            lexicon,
            size,
            seed,
            out,
            manifest,
            no_casefold,
        }) => {
            let lex = cmd::read_lexicons(&lexicon).invalid()?;
            let (mut items, warnings) = enqueue_samples(&lex, size, seed).invalid()?;
            print_warnings(&warnings);
            if let Some(m) = manifest {
                let corpus = cmd::open_corpus(&m).invalid()?;
                attach_examples(&mut items, &corpus, !no_casefold, 3);
            }
            write_output(&out, &items_to_jsonl(&items))?;
            println!("{} items", items.len());
            Ok(())
        }
        Command::Annotate(AnnotateCmd::Serve {
            port,
            host,
            journal,
            items,
            lexicon,
            vocab,
            refined_dir,
            adjudication,
        }) => {
            let files = ServiceFiles {
                items,
                journal,
                lexicon,
                vocab,
                refined_dir,
            };
            let (state, warnings) =
                load_state(&files, parse_adjudication(&adjudication)?).invalid()?;
            print_warnings(&warnings);
            serve(SocketAddr::new(host, port), state)
                .await
                .in_stage("serve", &files.journal)
        }
        Command::Annotate(AnnotateCmd::Accuracy {
            items,
            journal,
            adjudication,
            json,
        }) => {
            let (store, warnings) = offline_store(&items, &journal).invalid()?;
            print_warnings(&warnings);
            let (rows, warnings) =
                alignment_accuracy(&store.labels_by_domain(parse_adjudication(&adjudication)?));
            print_warnings(&warnings);
            if json {
                println!("{}", serde_json::to_string_pretty(&rows).invalid()?);
            } else {
                println!("domain\tC\tP\tI\ttotal");
                for (d, r) in &rows {
                    let (c, p, i) = r.percentages();
                    println!("{d}\t{c}%\t{p}%\t{i}%\t{}", r.total());
                }
            }
            Ok(())
        }
        Command::Prompts(PromptsCmd::Render {
            template,
            sentence,
            target,
            domain,
            tags,
            examples,
            candidates,
            prior,
            catalog,
        }) => {
            let catalog = load_catalog(catalog.as_deref())?;
            let few_shot_examples = match examples {
                Some(p) => Some(read_examples(&p).invalid()?),
                None => None,
            };
            let ctx = PromptContext {
                source_sentence: sentence,
                source_tokens: Vec::new(),
                target_language: target,
                domain,
                word_domain_tags: tags.as_deref().map(parse_tags).transpose().invalid()?,
                few_shot_examples,
                candidate_domains: candidates
                    .map(|c| {
                        c.split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect()
                    })
                    .unwrap_or_default(),
                prior_hypothesis: prior,
            };
            let rendered = catalog.render(template, &ctx).invalid()?;
            print!("{}", rendered.to_text());
            Ok(())
        }
        Command::Prompts(PromptsCmd::Show { template, catalog }) => {
            let catalog = load_catalog(catalog.as_deref())?;
            match template {
                Some(t) => print!("{}", catalog.describe(t)),
                None => print!("{}", catalog.raw()),
            }
            Ok(())
        }
        Command::Run(args) => run_cmd(args).await,
        Command::Score(args) => score_cmd(args, exec).await,
        Command::Significance(args) => {
            let a = cmd::eval_records(&cmd::read_run(&args.run_a).invalid()?);
            let b = cmd::eval_records(&cmd::read_run(&args.run_b).invalid()?);
            let annotations = match &args.annotations {
                Some(p) => cmd::read_annotations(p).invalid()?,
                None => Vec::new(),
            };
            let lang = Lang::new(&args.target_lang).invalid()?;
            let result = cmd::significance(
                &a,
                &b,
                args.metric,
                &annotations,
                &lang,
                args.mode,
                args.resamples,
                args.seed,
                exec,
            )
            .invalid()?;
            let body = serde_json::to_string_pretty(&result).invalid()? + "\n";
            match &args.out {
                Some(p) => write_output(p, &body)?,
                None => print!("{body}"),
            }
            Ok(())
        }
        Command::Report(args) => {
            let pairing = parse_pairing(&args.pairing).invalid()?;
            let scores = cmd::read_score_dir(&args.scores).invalid()?;
            let (text, warnings) = cmd::render_report(&scores, &pairing, args.format).invalid()?;
            print_warnings(&warnings);
            match &args.out {
                Some(p) => write_output(p, &text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Pipeline(PipelineCmd::All { config, force, out }) => {
            let resolved = pipeline::load_config(&config, out.as_deref())?;
            let summary = pipeline::pipeline_all(&resolved, force, exec).await?;
            println!(
                "pipeline: {} stages executed, {} skipped; report at {}",
                summary.executed.len(),
                summary.skipped.len(),
                summary.report.display()
            );
            Ok(())
        }
    }
}

fn load_catalog(path: Option<&Path>) -> CliResult<Catalog> {
    match path {
        Some(p) => Catalog::from_path(p).invalid(),
        None => Ok(Catalog::builtin()),
    }
}

fn read_examples(path: &Path) -> anyhow::Result<Vec<FewShotExample>> {
    cmd::read_text(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(anyhow::Error::from))
        .collect()
}

/// `8=News,3=Law` → {8: News, 3: Law}.
fn parse_tags(s: &str) -> anyhow::Result<BTreeMap<usize, String>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (i, d) = p
                .split_once('=')
                .ok_or_else(|| anyhow!("tag `{p}` is not index=Domain"))?;
            Ok((i.trim().parse()?, d.trim().to_string()))
        })
        .collect()
}

async fn run_cmd(args: RunArgs) -> CliResult<()> {
    let corpus = cmd::open_corpus(&args.manifest).invalid()?;
    let domain = cmd::resolve_domain(&corpus, &args.domain).invalid()?;
    let catalog = load_catalog(args.catalog.as_deref())?;
    let annotations = match &args.annotations {
        Some(p) => Some(cmd::read_annotations(p).invalid()?),
        None => None,
    };
    let few_shot_seed = match (args.template.is_few_shot(), args.few_shot_seed) {
        (true, None) => return Err(anyhow!("{} needs --few-shot-seed", args.template)).invalid(),
        (_, s) => s.unwrap_or(0),
    };
    let mut generation = GenerationConfig::default();
    if let Some(m) = args.model {
        generation.model_name = m;
    }
    if let Some(t) = args.temperature {
        generation.temperature = t;
    }
    if let Some(p) = args.top_p {
        generation.top_p = p;
    }
    generation
        .validate()
        .map_err(anyhow::Error::msg)
        .invalid()?;
    let dictionary = match (args.backend, &args.mock_dict) {
        (BackendKind::Mock, None) => {
            return Err(anyhow!("the mock backend needs --mock-dict")).invalid()
        }
        (BackendKind::Mock, Some(p)) => cmd::read_mock_dictionary(p).invalid()?,
        (BackendKind::Openai, _) => BTreeMap::new(),
    };
    let fallback = if args.mock_drop_unknown {
        MockFallback::Drop
    } else {
        MockFallback::Echo
    };
    let backend = cmd::make_backend(
        args.backend,
        dictionary,
        fallback,
        Duration::from_secs(args.timeout_secs),
    )
    .invalid()?;
    let (items, warnings) = cmd::run_items(
        &corpus,
        domain,
        args.template,
        annotations.as_deref(),
        few_shot_seed,
        args.k,
    )
    .invalid()?;
    print_warnings(&warnings);

    let checkpoint = partial_path(&args.out);
    if args.fresh && checkpoint.exists() {
        std::fs::remove_file(&checkpoint).in_stage("run", &checkpoint)?;
    }
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).in_stage("run", dir)?;
    }
    let opts = RunOptions {
        template: args.template,
        generation,
        retry: RetryPolicy::default(),
        parallelism: args.parallelism,
        checkpoint: Some(checkpoint.clone()),
        max_failure_ratio: 0.5,
    };
    let records = run_strategy(backend.as_ref(), &catalog, &items, &opts)
        .await
        .in_stage("run", &checkpoint)?;
    std::fs::write(&checkpoint, records_to_jsonl(&records)).in_stage("run", &checkpoint)?;
    std::fs::rename(&checkpoint, &args.out).in_stage("run", &args.out)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!("{} records, {failed} failed", records.len());
    Ok(())
}

async fn score_cmd(args: ScoreArgs, exec: Execution) -> CliResult<()> {
    let records = cmd::eval_records(&cmd::read_run(&args.run).invalid()?);
    let annotations = cmd::read_annotations(&args.annotations).invalid()?;
    let lang = Lang::new(&args.target_lang).invalid()?;
    let timeout = Duration::from_secs(args.timeout_secs);
    let judge_backend = if args.judge {
        Some(
            cmd::make_backend(
                BackendKind::Openai,
                BTreeMap::new(),
                MockFallback::Echo,
                timeout,
            )
            .invalid()?,
        )
    } else {
        None
    };
    let mut judge_cfg = GenerationConfig::default();
    if let Some(m) = &args.judge_model {
        judge_cfg.model_name = m.clone();
    }
    let extra = ExtraScorers {
        judge: judge_backend.as_deref().map(|b| (b, &judge_cfg, 8)),
        scorer_url: args.scorer_url.as_deref(),
        timeout,
    };
    let (score, warnings) = cmd::score_run(&records, &annotations, &lang, args.mode, &extra, exec)
        .await
        .invalid()?;
    print_warnings(&warnings);
    write_output(&args.out, &score.to_json())?;
    print!("{}", score.to_json());
    Ok(())
}
