//! `pipeline all` configuration file.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Every random choice is driven by one of the named seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ambig_core::metrics::{MatchMode, DEFAULT_RESAMPLES, MIN_RESAMPLES};
use ambig_core::prompts::{TemplateId, DEFAULT_FEW_SHOT_K};
use ambig_core::report::{parse_pairing, Format, Pair};
use ambig_llm::{GenerationConfig, MockFallback};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    /// Excluded from the config checksum so that the same config run into
    /// two directories stamps identical artifacts.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub templates: Vec<TemplateId>,
    /// `default` or an explicit list such as `T5-T1,T7-T2`.
    #[serde(default = "default_pairing")]
    pub pairing: String,
    #[serde(default = "default_format")]
    pub report_format: String,
    /// Alternative prompt catalog; the bundled one otherwise.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub few_shot_k: usize,
    /// Word pairs per domain queued for alignment review.
    #[serde(default = "default_review_size")]
    pub review_sample_size: usize,
    #[serde(default)]
    pub lexicon: LexiconSection,
    pub backend: BackendSpec,
    #[serde(default)]
    pub generation: GenerationConfig,
    pub seeds: Seeds,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_pairing() -> String {
    "default".into()
}

fn default_format() -> String {
    "markdown".into()
}

fn default_k() -> usize {
    DEFAULT_FEW_SHOT_K
}

fn default_review_size() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconSection {
    pub min_count: u64,
    pub casefold: bool,
    /// One stopword per line; the built-in list for the source language
    /// otherwise.
    pub stopwords: Option<PathBuf>,
}

impl Default for LexiconSection {
    fn default() -> Self {
        LexiconSection {
            min_count: ambig_core::lexicon::DEFAULT_AMBIGUITY_MIN_COUNT,
            casefold: true,
            stopwords: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Dictionary mock, fully offline and deterministic.
    Mock,
    /// Any OpenAI-compatible chat-completions endpoint. Credentials come
    /// from the environment.
    Openai,
}

impl FromStr for BackendKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "openai" => Ok(BackendKind::Openai),
            other => bail!("unknown backend `{other}` (expected mock or openai)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub mock_dictionary: BTreeMap<String, String>,
    #[serde(default)]
    pub mock_fallback: MockFallback,
}

fn default_parallelism() -> usize {
    8
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub sampling: u64,
    pub bootstrap: u64,
    pub few_shot: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub mode: MatchMode,
    pub resamples: usize,
    /// Ask the configured backend to act as judge.
    pub judge: bool,
    /// Base URL of an external learned-metric scorer (`POST /score`).
    pub scorer_url: Option<String>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            mode: MatchMode::Lenient,
            resamples: DEFAULT_RESAMPLES,
            judge: false,
            scorer_url: None,
        }
    }
}

/// A parsed config with paths resolved and derived values checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub catalog: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub pairing: Vec<Pair>,
    pub format: Format,
    /// SHA-256 over the canonical config, output directory excluded.
    pub checksum: String,
}

impl PipelineConfig {
    pub fn parse(raw: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(raw)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn checksum(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Checks invariants and resolves relative paths against `base`.
    pub fn resolve(self, base: &Path) -> anyhow::Result<Resolved> {
        if self.templates.is_empty() {
            bail!("`templates` is empty");
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.templates {
            if !seen.insert(*t) {
                bail!("template {t} is listed twice");
            }
        }
        if self.backend.parallelism == 0 {
            bail!("backend.parallelism must be at least 1");
        }
        if self.backend.kind == BackendKind::Mock && self.backend.mock_dictionary.is_empty() {
            bail!("the mock backend needs a non-empty backend.mock_dictionary");
        }
        if self.few_shot_k == 0 {
            bail!("few_shot_k must be at least 1");
        }
        if self.review_sample_size == 0 {
            bail!("review_sample_size must be at least 1");
        }
        if self.lexicon.min_count == 0 {
            bail!("lexicon.min_count must be at least 1");
        }
        if self.metrics.resamples < MIN_RESAMPLES {
            bail!("metrics.resamples must be at least {MIN_RESAMPLES}");
        }
        self.generation.validate().map_err(anyhow::Error::msg)?;
        let pairing = parse_pairing(&self.pairing)?;
        let format: Format = self.report_format.parse().map_err(anyhow::Error::msg)?;

        let at = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let manifest = at(&self.manifest);
        if !manifest.is_file() {
            bail!("manifest {} does not exist", manifest.display());
        }
        let catalog = self.catalog.as_deref().map(at);
        let stopwords = self.lexicon.stopwords.as_deref().map(at);
        for p in catalog.iter().chain(&stopwords) {
            if !p.is_file() {
                bail!("{} does not exist", p.display());
            }
        }
        let output_dir = at(&self.output_dir);
        let checksum = self.checksum();
        Ok(Resolved {
            config: self,
            manifest,
            output_dir,
            catalog,
            stopwords,
            pairing,
            format,
            checksum,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
manifest = "m.toml"
output_dir = "out"
templates = ["T1", "T5"]

[backend]
kind = "mock"
mock_dictionary = { power = "权力" }

[seeds]
sampling = 1
bootstrap = 2
few_shot = 3
"#;

    #[test]
    fn defaults_fill_optional_sections() {
        let c = PipelineConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.lexicon.min_count, 2);
        assert_eq!(c.metrics.resamples, 1000);
        assert_eq!(c.generation.temperature, 0.8);
        assert_eq!(c.pairing, "default");
    }

    #[test]
    fn seeds_are_required() {
        let raw = MINIMAL.replace("few_shot = 3\n", "");
        assert!(PipelineConfig::parse(&raw).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let raw = format!("{MINIMAL}\n[metrics]\nmodee = \"strict\"\n");
        assert!(PipelineConfig::parse(&raw).is_err());
    }

    #[test]
    fn checksum_ignores_output_dir() {
        let a = PipelineConfig::parse(MINIMAL).unwrap();
        let b = PipelineConfig::parse(&MINIMAL.replace("\"out\"", "\"elsewhere\"")).unwrap();
        let c = PipelineConfig::parse(&MINIMAL.replace("bootstrap = 2", "bootstrap = 5")).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn missing_manifest_fails_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let err = PipelineConfig::parse(MINIMAL)
            .unwrap()
            .resolve(dir.path())
            .unwrap_err();
        assert!(err.to_string().contains("does not exist"), "{err}");
    }
}
