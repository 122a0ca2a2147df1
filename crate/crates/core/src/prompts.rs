//! The ten prompt strategies, rendered from a versioned template catalog into
//! chat messages.
//!
//! T1-T4 are the base strategies (zero-shot, chain-of-thought, few-shot,
//! reflection). T5-T10 add domain information: a sentence-level tag (T5),
//! per-word tags (T6), a tag inside the CoT translation step (T7), model-side
//! domain identification (T8), tagged few-shot examples (T9) and a
//! domain-aware reflection turn (T10).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::SentencePair;
use crate::sampling::sample_indices;

pub const DEFAULT_CATALOG: &str = include_str!("../templates/catalog.toml");
pub const DEFAULT_FEW_SHOT_K: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{template} requires {field}")]
    MissingField {
        template: TemplateId,
        field: &'static str,
    },
    #[error("unknown template id `{0}` (expected T1..T10)")]
    UnknownTemplate(String),
    #[error("{template} is not a reflection template")]
    NotReflection { template: TemplateId },
    #[error("invalid catalog: {0}")]
    Catalog(String),
    #[error("few-shot datastore is empty")]
    EmptyDatastore,
    #[error("few-shot k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    T10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseStrategy {
    ZeroShot,
    Cot,
    FewShot,
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainInfo {
    None,
    SentenceTag,
    WordTags,
    TagInStep2,
    AutoDiscriminate,
    TaggedExamples,
    TagInReflection,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::T1,
        TemplateId::T2,
        TemplateId::T3,
        TemplateId::T4,
        TemplateId::T5,
        TemplateId::T6,
        TemplateId::T7,
        TemplateId::T8,
        TemplateId::T9,
        TemplateId::T10,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn base(self) -> BaseStrategy {
        use TemplateId::*;
        match self {
            T1 | T5 | T6 => BaseStrategy::ZeroShot,
            T2 | T7 | T8 => BaseStrategy::Cot,
            T3 | T9 => BaseStrategy::FewShot,
            T4 | T10 => BaseStrategy::Reflection,
        }
    }

    pub fn domain_info(self) -> DomainInfo {
        use TemplateId::*;
        match self {
            T1 | T2 | T3 | T4 => DomainInfo::None,
            T5 => DomainInfo::SentenceTag,
            T6 => DomainInfo::WordTags,
            T7 => DomainInfo::TagInStep2,
            T8 => DomainInfo::AutoDiscriminate,
            T9 => DomainInfo::TaggedExamples,
            T10 => DomainInfo::TagInReflection,
        }
    }

    /// The base template a disambiguation template is compared against.
    pub fn base_template(self) -> TemplateId {
        use TemplateId::*;
        match self {
            T5 | T6 => T1,
            T7 | T8 => T2,
            T9 => T3,
            T10 => T4,
            base => base,
        }
    }

    pub fn is_reflection(self) -> bool {
        self.base() == BaseStrategy::Reflection
    }

    pub fn is_few_shot(self) -> bool {
        self.base() == BaseStrategy::FewShot
    }

    pub fn requires_domain(self) -> bool {
        use TemplateId::*;
        matches!(self, T5 | T6 | T7 | T9 | T10)
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.number())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n: usize = s
            .trim()
            .strip_prefix(['T', 't'])
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))?;
        TemplateId::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

impl Serialize for TemplateId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TemplateId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub source: String,
    pub target: String,
    #[serde(default)]
    pub domain: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub source_sentence: String,
    /// Tokens that `word_domain_tags` indexes into. Empty means "split the
    /// sentence on whitespace".
    #[serde(default)]
    pub source_tokens: Vec<String>,
    pub target_language: String,
    #[serde(default)]
    pub domain: Option<String>,
    #[serde(default)]
    pub word_domain_tags: Option<BTreeMap<usize, String>>,
    #[serde(default)]
    pub few_shot_examples: Option<Vec<FewShotExample>>,
    /// Closed domain list offered to T8's identification step.
    #[serde(default)]
    pub candidate_domains: Vec<String>,
    #[serde(default)]
    pub prior_hypothesis: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// A rendered conversation. The shared system message is kept apart from the
/// turn sequence and prepended on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: TemplateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub messages: Vec<ChatMessage>,
    /// The sentence being translated.
    pub source: String,
}

impl RenderedPrompt {
    /// System message (if any) followed by the turns.
    pub fn wire_messages(&self) -> Vec<ChatMessage> {
        let mut out = Vec::with_capacity(self.messages.len() + 1);
        if let Some(s) = &self.system {
            out.push(ChatMessage::new(Role::System, s.clone()));
        }
        out.extend(self.messages.iter().cloned());
        out
    }

    /// Plain-text dump used for golden files and `prompts render`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for m in self.wire_messages() {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            s.push_str(&format!("[{role}]\n{}\n", m.content));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct CatalogFile {
    version: String,
    system: Option<String>,
    templates: BTreeMap<String, TemplateSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateSpec {
    user: Option<String>,
    example: Option<String>,
    example_separator: Option<String>,
    first_turn: Option<String>,
    reflect: Option<String>,
    domain_choices: Option<String>,
}

#[derive(Debug, Clone)]
enum Skeleton {
    Single {
        user: String,
        example: Option<(String, String)>,
        domain_choices: Option<String>,
    },
    Reflection {
        first_turn: TemplateId,
        reflect: String,
    },
}

/// A parsed, validated template catalog.
#[derive(Debug, Clone)]
pub struct Catalog {
    version: String,
    system: Option<String>,
    checksum: String,
    raw: String,
    skeletons: BTreeMap<TemplateId, Skeleton>,
}

const USER_SLOTS: &[&str] = &[
    "target_language",
    "source",
    "domain",
    "tagged_source",
    "domain_choices",
    "examples",
];
const EXAMPLE_SLOTS: &[&str] = &["example_source", "example_target", "example_domain"];
const REFLECT_SLOTS: &[&str] = &["target_language", "source", "domain"];
const CHOICES_SLOTS: &[&str] = &["choices"];

fn slot_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

fn check_slots(id: &str, field: &str, skeleton: &str, allowed: &[&str]) -> Result<(), PromptError> {
    for cap in slot_regex().captures_iter(skeleton) {
        let name = &cap[1];
        if !allowed.contains(&name) {
            return Err(PromptError::Catalog(format!(
                "{id}.{field}: unknown slot {{{name}}}"
            )));
        }
    }
    Ok(())
}

/// Single-pass slot substitution; substituted values are never rescanned.
fn fill(
    skeleton: &str,
    value: &dyn Fn(&str) -> Result<String, PromptError>,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(skeleton.len() + 64);
    let mut last = 0;
    for cap in slot_regex().captures_iter(skeleton) {
        let m = cap.get(0).expect("whole match");
        out.push_str(&skeleton[last..m.start()]);
        out.push_str(&value(&cap[1])?);
        last = m.end();
    }
    out.push_str(&skeleton[last..]);
    Ok(out)
}

impl Catalog {
    pub fn builtin() -> Catalog {
        Catalog::parse(DEFAULT_CATALOG).expect("built-in catalog is valid")
    }

    pub fn from_path(path: &Path) -> Result<Catalog, PromptError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Catalog(format!("{}: {e}", path.display())))?;
        Catalog::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Catalog, PromptError> {
        let file: CatalogFile =
            toml::from_str(raw).map_err(|e| PromptError::Catalog(e.to_string()))?;
        let mut skeletons = BTreeMap::new();
        for (key, spec) in &file.templates {
            let id: TemplateId = key.parse()?;
            let skeleton = if id.is_reflection() {
                let first = spec
                    .first_turn
                    .as_deref()
                    .ok_or_else(|| PromptError::Catalog(format!("{id}: missing first_turn")))?;
                let first_turn: TemplateId = first.parse()?;
                if first_turn.base() != BaseStrategy::ZeroShot {
                    return Err(PromptError::Catalog(format!(
                        "{id}: first_turn must be a zero-shot template"
                    )));
                }
                let reflect = spec
                    .reflect
                    .clone()
                    .ok_or_else(|| PromptError::Catalog(format!("{id}: missing reflect")))?;
                check_slots(key, "reflect", &reflect, REFLECT_SLOTS)?;
                Skeleton::Reflection {
                    first_turn,
                    reflect,
                }
            } else {
                let user = spec
                    .user
                    .clone()
                    .ok_or_else(|| PromptError::Catalog(format!("{id}: missing user")))?;
                check_slots(key, "user", &user, USER_SLOTS)?;
                let example = match (&spec.example, id.is_few_shot()) {
                    (Some(e), true) => {
                        check_slots(key, "example", e, EXAMPLE_SLOTS)?;
                        Some((
                            e.clone(),
                            spec.example_separator
                                .clone()
                                .unwrap_or_else(|| "\n\n".into()),
                        ))
                    }
                    (None, true) => {
                        return Err(PromptError::Catalog(format!("{id}: missing example")))
                    }
                    (_, false) => None,
                };
                if let Some(c) = &spec.domain_choices {
                    check_slots(key, "domain_choices", c, CHOICES_SLOTS)?;
                }
                Skeleton::Single {
                    user,
                    example,
                    domain_choices: spec.domain_choices.clone(),
                }
            };
            skeletons.insert(id, skeleton);
        }
        if let Some(missing) = TemplateId::ALL
            .iter()
            .find(|id| !skeletons.contains_key(id))
        {
            return Err(PromptError::Catalog(format!("missing template {missing}")));
        }
        Ok(Catalog {
            version: file.version,
            system: file.system,
            checksum: hex::encode(Sha256::digest(raw.as_bytes())),
            raw: raw.to_string(),
            skeletons,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// SHA-256 of the catalog text.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// Human-readable skeleton of one template.
    pub fn describe(&self, id: TemplateId) -> String {
        match &self.skeletons[&id] {
            Skeleton::Single {
                user,
                example,
                domain_choices,
            } => {
                let mut s = format!("user: {user:?}\n");
                if let Some((e, sep)) = example {
                    s.push_str(&format!("example: {e:?}\nexample_separator: {sep:?}\n"));
                }
                if let Some(c) = domain_choices {
                    s.push_str(&format!("domain_choices: {c:?}\n"));
                }
                s
            }
            Skeleton::Reflection {
                first_turn,
                reflect,
            } => {
                format!("first_turn: {first_turn}\nreflect: {reflect:?}\n")
            }
        }
    }

    /// Renders a template. Reflection templates render their first turn
    /// unless `ctx.prior_hypothesis` is set, in which case the full
    /// reflection exchange is rendered.
    pub fn render(
        &self,
        id: TemplateId,
        ctx: &PromptContext,
    ) -> Result<RenderedPrompt, PromptError> {
        match &self.skeletons[&id] {
            Skeleton::Reflection { .. } if ctx.prior_hypothesis.is_some() => {
                self.build_reflection_turns(id, ctx)
            }
            Skeleton::Reflection { first_turn, .. } => {
                if id.requires_domain() && ctx.domain.is_none() {
                    return Err(PromptError::MissingField {
                        template: id,
                        field: "domain",
                    });
                }
                let mut p = self.render(*first_turn, ctx)?;
                p.template = id;
                Ok(p)
            }
            Skeleton::Single {
                user,
                example,
                domain_choices,
            } => {
                check_requirements(id, ctx)?;
                let content = fill(user, &|slot| {
                    self.user_slot(id, slot, ctx, example.as_ref(), domain_choices.as_deref())
                })?;
                Ok(RenderedPrompt {
                    template: id,
                    system: self.system.clone(),
                    messages: vec![ChatMessage::new(Role::User, content)],
                    source: ctx.source_sentence.clone(),
                })
            }
        }
    }

    /// `[turn-1 user, assistant(prior hypothesis), reflection request]`.
    pub fn build_reflection_turns(
        &self,
        id: TemplateId,
        ctx: &PromptContext,
    ) -> Result<RenderedPrompt, PromptError> {
        let Skeleton::Reflection {
            first_turn,
            reflect,
        } = &self.skeletons[&id]
        else {
            return Err(PromptError::NotReflection { template: id });
        };
        let hypothesis = ctx
            .prior_hypothesis
            .as_ref()
            .ok_or(PromptError::MissingField {
                template: id,
                field: "prior_hypothesis",
            })?;
        if id.requires_domain() && ctx.domain.is_none() {
            return Err(PromptError::MissingField {
                template: id,
                field: "domain",
            });
        }
        let turn1 = self.render(*first_turn, ctx)?;
        let reflection = fill(reflect, &|slot| match slot {
            "target_language" => Ok(ctx.target_language.clone()),
            "source" => Ok(ctx.source_sentence.clone()),
            "domain" => require_domain(id, ctx),
            other => Err(PromptError::Catalog(format!("unexpected slot {other}"))),
        })?;
        let mut messages = turn1.messages;
        messages.push(ChatMessage::new(Role::Assistant, hypothesis.clone()));
        messages.push(ChatMessage::new(Role::User, reflection));
        Ok(RenderedPrompt {
            template: id,
            system: turn1.system,
            messages,
            source: ctx.source_sentence.clone(),
        })
    }

    fn user_slot(
        &self,
        id: TemplateId,
        slot: &str,
        ctx: &PromptContext,
        example: Option<&(String, String)>,
        domain_choices: Option<&str>,
    ) -> Result<String, PromptError> {
        match slot {
            "target_language" => Ok(ctx.target_language.clone()),
            "source" => Ok(ctx.source_sentence.clone()),
            "domain" => require_domain(id, ctx),
            "tagged_source" => Ok(tagged_source(id, ctx)?),
            "domain_choices" => {
                if ctx.candidate_domains.is_empty() {
                    return Ok(String::new());
                }
                let choices = ctx.candidate_domains.join(", ");
                match domain_choices {
                    Some(frag) => fill(frag, &|_| Ok(choices.clone())),
                    None => Ok(format!(" ({choices})")),
                }
            }
            "examples" => {
                let (skeleton, sep) =
                    example.ok_or(PromptError::Catalog(format!("{id}: no example skeleton")))?;
                let examples = ctx
                    .few_shot_examples
                    .as_ref()
                    .ok_or(PromptError::MissingField {
                        template: id,
                        field: "few_shot_examples",
                    })?;
                let rendered = examples
                    .iter()
                    .map(|ex| {
                        fill(skeleton, &|s| match s {
                            "example_source" => Ok(ex.source.clone()),
                            "example_target" => Ok(ex.target.clone()),
                            "example_domain" => {
                                ex.domain.clone().or_else(|| ctx.domain.clone()).ok_or(
                                    PromptError::MissingField {
                                        template: id,
                                        field: "domain",
                                    },
                                )
                            }
                            other => Err(PromptError::Catalog(format!("unexpected slot {other}"))),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(rendered.join(sep))
            }
            other => Err(PromptError::Catalog(format!("unexpected slot {other}"))),
        }
    }
}

fn require_domain(id: TemplateId, ctx: &PromptContext) -> Result<String, PromptError> {
    ctx.domain.clone().ok_or(PromptError::MissingField {
        template: id,
        field: "domain",
    })
}

fn check_requirements(id: TemplateId, ctx: &PromptContext) -> Result<(), PromptError> {
    if id.requires_domain() && ctx.domain.is_none() {
        return Err(PromptError::MissingField {
            template: id,
            field: "domain",
        });
    }
    if id == TemplateId::T6 && ctx.word_domain_tags.is_none() {
        return Err(PromptError::MissingField {
            template: id,
            field: "word_domain_tags",
        });
    }
    if id.is_few_shot() && ctx.few_shot_examples.is_none() {
        return Err(PromptError::MissingField {
            template: id,
            field: "few_shot_examples",
        });
    }
    Ok(())
}

/// The sentence with `word(domain)` after every tagged token.
fn tagged_source(id: TemplateId, ctx: &PromptContext) -> Result<String, PromptError> {
    let tags = ctx
        .word_domain_tags
        .as_ref()
        .ok_or(PromptError::MissingField {
            template: id,
            field: "word_domain_tags",
        })?;
    let tokens: Vec<&str> = if ctx.source_tokens.is_empty() {
        ctx.source_sentence.split_whitespace().collect()
    } else {
        ctx.source_tokens.iter().map(String::as_str).collect()
    };
    Ok(tokens
        .iter()
        .enumerate()
        .map(|(i, t)| match tags.get(&i) {
            Some(d) => format!("{t}({d})"),
            None => t.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" "))
}

/// Renders with the built-in catalog.
pub fn render(id: TemplateId, ctx: &PromptContext) -> Result<RenderedPrompt, PromptError> {
    builtin().render(id, ctx)
}

pub fn build_reflection_turns(
    id: TemplateId,
    ctx: &PromptContext,
) -> Result<RenderedPrompt, PromptError> {
    builtin().build_reflection_turns(id, ctx)
}

fn builtin() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(Catalog::builtin)
}

/// Draws `k` examples uniformly without replacement from the datastore,
/// optionally restricted to one domain. A pool smaller than `k` is returned
/// whole, with a warning.
pub fn sample_few_shot(
    datastore: &[&SentencePair],
    k: usize,
    seed: u64,
    domain: Option<&str>,
) -> Result<(Vec<FewShotExample>, Option<String>), PromptError> {
    if k == 0 {
        return Err(PromptError::ZeroK);
    }
    let pool: Vec<&SentencePair> = datastore
        .iter()
        .copied()
        .filter(|p| domain.is_none_or(|d| p.domain == d))
        .collect();
    if pool.is_empty() {
        return Err(PromptError::EmptyDatastore);
    }
    let warning = (pool.len() < k)
        .then(|| format!("few-shot pool has {} pairs, fewer than k={k}", pool.len()));
    let examples = sample_indices(seed, pool.len(), k)
        .into_iter()
        .map(|i| FewShotExample {
            source: pool[i].source_text.clone(),
            target: pool[i].target_text.clone(),
            domain: Some(pool[i].domain.clone()),
        })
        .collect();
    Ok((examples, warning))
}

fn answer_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:\*\*)?\s*(?:final\s+translation|translation)\s*(?:\*\*)?\s*[:：]\s*(?:\*\*)?\s*(.*)$")
            .expect("valid regex")
    })
}

fn step_prefix_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\s*step\s*\d+\s*[:：.]\s*").expect("valid regex"))
}

/// Pulls the final translation out of a model reply.
///
/// Priority: the last `<translation>...</translation>` block; else the last
/// `Translation:` / `Final translation:` marker (its remainder, or the next
/// nonempty line); else the last nonempty line with any `Step N:` prefix
/// removed. Surrounding quotes are trimmed.
pub fn extract_translation(reply: &str) -> String {
    if let Some(end) = reply.rfind("</translation>") {
        if let Some(start) = reply[..end].rfind("<translation>") {
            return clean(&reply[start + "<translation>".len()..end]);
        }
    }
    let lines: Vec<&str> = reply.lines().collect();
    for (i, line) in lines.iter().enumerate().rev() {
        if let Some(cap) = answer_line_regex().captures(line) {
            let rest = cap[1].trim();
            if !rest.is_empty() {
                return clean(rest);
            }
            if let Some(next) = lines[i + 1..].iter().find(|l| !l.trim().is_empty()) {
                return clean(next);
            }
        }
    }
    lines
        .iter()
        .rev()
        .find(|l| !l.trim().is_empty())
        .map(|l| clean(&step_prefix_regex().replace(l, "")))
        .unwrap_or_default()
}

fn clean(s: &str) -> String {
    const QUOTES: &[char] = &['"', '\'', '“', '”', '「', '」', '*', '`'];
    s.trim().trim_matches(QUOTES).trim().to_string()
}

/// Names of every slot a skeleton string uses (for tooling and tests).
pub fn slots_of(skeleton: &str) -> BTreeSet<String> {
    slot_regex()
        .captures_iter(skeleton)
        .map(|c| c[1].to_string())
        .collect()
}
