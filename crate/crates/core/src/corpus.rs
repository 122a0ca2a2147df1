//! Multi-domain parallel corpora: manifest loading, tokenization and Pharaoh
//! word-alignment parsing.
//!
//! A corpus is described by a TOML manifest:
//!
//! ```toml
//! source_lang = "en"
//! target_lang = "zh"
//!
//! [[domains]]
//! id = "law"
//! display_name = "Laws"
//! train_src = "law/train.src"
//! train_tgt = "law/train.tgt"
//! train_align = "law/train.align"
//! test_src = "law/test.src"
//! test_tgt = "law/test.tgt"
//! ```
//!
//! Paths are relative to the manifest. All text is NFC-normalized at load,
//! every sentence must tokenize to at least one token, and every alignment
//! link must be in bounds for its sentence.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::nfc;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("unknown language code `{0}`")]
    UnknownLanguage(String),
    #[error("invalid domain id `{0}` (expected [a-z0-9_-]+)")]
    InvalidDomainId(String),
    #[error("duplicate domain id `{0}`")]
    DuplicateDomain(String),
    #[error("line count mismatch: {left} has {left_lines} lines, {right} has {right_lines}; first mismatching line {line}")]
    LineCountMismatch {
        left: PathBuf,
        left_lines: usize,
        right: PathBuf,
        right_lines: usize,
        line: usize,
    },
    #[error("{path}:{line}: empty sentence")]
    EmptySentence { path: PathBuf, line: usize },
    #[error("{path}:{line}: {source}")]
    Alignment {
        path: PathBuf,
        line: usize,
        #[source]
        source: AlignmentParseError,
    },
    #[error("{path}:{line}: alignment link {src}-{tgt} out of bounds for sentence of {src_len}x{tgt_len} tokens")]
    AlignmentOutOfBounds {
        path: PathBuf,
        line: usize,
        src: usize,
        tgt: usize,
        src_len: usize,
        tgt_len: usize,
    },
}

/// A malformed `i-j` token in a Pharaoh alignment line.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed alignment token `{text}` at token {token} (column {column})")]
pub struct AlignmentParseError {
    /// 1-based index of the offending token within the line.
    pub token: usize,
    /// 1-based character column where the token starts.
    pub column: usize,
    pub text: String,
}

const SPACE_DELIMITED: &[(&str, &str)] = &[
    ("en", "English"),
    ("de", "German"),
    ("fr", "French"),
    ("es", "Spanish"),
    ("it", "Italian"),
    ("pt", "Portuguese"),
    ("nl", "Dutch"),
    ("ru", "Russian"),
    ("cs", "Czech"),
    ("pl", "Polish"),
];
const CHARACTER_BASED: &[(&str, &str)] = &[("zh", "Chinese"), ("ja", "Japanese"), ("ko", "Korean")];

/// A validated language code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Lang(String);

impl Lang {
    pub fn new(code: &str) -> Result<Self, CorpusError> {
        let code = code.trim().to_ascii_lowercase();
        if SPACE_DELIMITED
            .iter()
            .chain(CHARACTER_BASED)
            .any(|(c, _)| *c == code)
        {
            Ok(Lang(code))
        } else {
            Err(CorpusError::UnknownLanguage(code))
        }
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    /// Tokenized per character (Chinese, Japanese, Korean).
    pub fn is_cjk(&self) -> bool {
        CHARACTER_BASED.iter().any(|(c, _)| *c == self.0)
    }

    /// English name used in prompts ("Chinese", "German", ...).
    pub fn display_name(&self) -> &'static str {
        SPACE_DELIMITED
            .iter()
            .chain(CHARACTER_BASED)
            .find(|(c, _)| *c == self.0)
            .map(|(_, n)| *n)
            .unwrap_or("Unknown")
    }
}

impl TryFrom<String> for Lang {
    type Error = CorpusError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Lang::new(&value)
    }
}

impl From<Lang> for String {
    fn from(l: Lang) -> String {
        l.0
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub id: String,
    pub display_name: String,
}

pub fn validate_domain_id(id: &str) -> Result<(), CorpusError> {
    let ok = !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-');
    if ok {
        Ok(())
    } else {
        Err(CorpusError::InvalidDomainId(id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source_text: String,
    pub target_text: String,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    pub domain: String,
    pub split: Split,
    /// 1-based line number in the domain's split files.
    pub line_no: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlignmentLink {
    pub src_index: usize,
    pub tgt_index: usize,
}

impl AlignmentLink {
    pub fn new(src_index: usize, tgt_index: usize) -> Self {
        Self {
            src_index,
            tgt_index,
        }
    }
}

/// A loaded, validated corpus. Immutable after load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub source_lang: Lang,
    pub target_lang: Lang,
    pub domains: Vec<Domain>,
    pub pairs: Vec<SentencePair>,
    /// Per domain, one link list per train pair of that domain, in line order.
    pub alignments: BTreeMap<String, Vec<Vec<AlignmentLink>>>,
}

impl Corpus {
    pub fn domain(&self, id: &str) -> Option<&Domain> {
        self.domains.iter().find(|d| d.id == id)
    }

    pub fn split_pairs<'a, 'd>(
        &'a self,
        domain: &'d str,
        split: Split,
    ) -> impl Iterator<Item = &'a SentencePair> + use<'a, 'd> {
        self.pairs
            .iter()
            .filter(move |p| p.domain == domain && p.split == split)
    }

    pub fn test_pairs(&self, domain: &str) -> Vec<&SentencePair> {
        self.split_pairs(domain, Split::Test).collect()
    }

    pub fn train_pairs(&self, domain: &str) -> Vec<&SentencePair> {
        self.split_pairs(domain, Split::Train).collect()
    }

    /// Train pairs of every domain zipped with their alignment links.
    pub fn aligned_train(&self) -> Vec<(&SentencePair, &[AlignmentLink])> {
        let mut out = Vec::new();
        for d in &self.domains {
            let links = self.alignments.get(&d.id).map(Vec::as_slice).unwrap_or(&[]);
            for (pair, l) in self.split_pairs(&d.id, Split::Train).zip(links) {
                out.push((pair, l.as_slice()));
            }
        }
        out
    }

    /// Per-domain (train, test) sentence counts in manifest order.
    pub fn line_counts(&self) -> Vec<(String, usize, usize)> {
        self.domains
            .iter()
            .map(|d| {
                let train = self.split_pairs(&d.id, Split::Train).count();
                let test = self.split_pairs(&d.id, Split::Test).count();
                (d.id.clone(), train, test)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub source_lang: String,
    pub target_lang: String,
    pub domains: Vec<ManifestDomain>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDomain {
    pub id: String,
    #[serde(default)]
    pub display_name: Option<String>,
    pub train_src: PathBuf,
    pub train_tgt: PathBuf,
    pub train_align: PathBuf,
    pub test_src: PathBuf,
    pub test_tgt: PathBuf,
}

impl Manifest {
    pub fn from_path(path: &Path) -> Result<Self, CorpusError> {
        let raw = read(path)?;
        toml::from_str(&raw).map_err(|e| CorpusError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Every data file the manifest references, resolved against `base`.
    pub fn files(&self, base: &Path) -> Vec<PathBuf> {
        self.domains
            .iter()
            .flat_map(|d| {
                [
                    &d.train_src,
                    &d.train_tgt,
                    &d.train_align,
                    &d.test_src,
                    &d.test_tgt,
                ]
            })
            .map(|p| base.join(p))
            .collect()
    }
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits file content into lines. A trailing newline does not open an
/// extra empty line; `\r\n` is accepted.
fn lines_of(content: &str) -> Vec<&str> {
    if content.is_empty() {
        return Vec::new();
    }
    let body = content.strip_suffix('\n').unwrap_or(content);
    body.split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect()
}

fn check_counts(left: &Path, l: usize, right: &Path, r: usize) -> Result<(), CorpusError> {
    if l == r {
        return Ok(());
    }
    Err(CorpusError::LineCountMismatch {
        left: left.to_path_buf(),
        left_lines: l,
        right: right.to_path_buf(),
        right_lines: r,
        line: l.min(r) + 1,
    })
}

/// Loads and validates the corpus described by the manifest at `manifest_path`.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus, CorpusError> {
    let manifest = Manifest::from_path(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let source_lang = Lang::new(&manifest.source_lang)?;
    let target_lang = Lang::new(&manifest.target_lang)?;

    let mut seen = HashSet::new();
    let mut domains = Vec::with_capacity(manifest.domains.len());
    let mut pairs = Vec::new();
    let mut alignments = BTreeMap::new();

    for md in &manifest.domains {
        validate_domain_id(&md.id)?;
        if !seen.insert(md.id.clone()) {
            return Err(CorpusError::DuplicateDomain(md.id.clone()));
        }
        domains.push(Domain {
            id: md.id.clone(),
            display_name: md.display_name.clone().unwrap_or_else(|| md.id.clone()),
        });

        let train = load_split(
            base,
            &md.train_src,
            &md.train_tgt,
            &md.id,
            Split::Train,
            &source_lang,
            &target_lang,
        )?;
        let align_path = base.join(&md.train_align);
        let align_raw = read(&align_path)?;
        let align_lines = lines_of(&align_raw);
        check_counts(
            &base.join(&md.train_src),
            train.len(),
            &align_path,
            align_lines.len(),
        )?;

        let mut domain_links = Vec::with_capacity(train.len());
        for (pair, line) in train.iter().zip(&align_lines) {
            let links = parse_alignment_line(line).map_err(|source| CorpusError::Alignment {
                path: align_path.clone(),
                line: pair.line_no,
                source,
            })?;
            for l in &links {
                if l.src_index >= pair.source_tokens.len()
                    || l.tgt_index >= pair.target_tokens.len()
                {
                    return Err(CorpusError::AlignmentOutOfBounds {
                        path: align_path.clone(),
                        line: pair.line_no,
                        src: l.src_index,
                        tgt: l.tgt_index,
                        src_len: pair.source_tokens.len(),
                        tgt_len: pair.target_tokens.len(),
                    });
                }
            }
            domain_links.push(links);
        }
        alignments.insert(md.id.clone(), domain_links);
        pairs.extend(train);
        pairs.extend(load_split(
            base,
            &md.test_src,
            &md.test_tgt,
            &md.id,
            Split::Test,
            &source_lang,
            &target_lang,
        )?);
    }

    Ok(Corpus {
        source_lang,
        target_lang,
        domains,
        pairs,
        alignments,
    })
}

fn load_split(
    base: &Path,
    src: &Path,
    tgt: &Path,
    domain: &str,
    split: Split,
    source_lang: &Lang,
    target_lang: &Lang,
) -> Result<Vec<SentencePair>, CorpusError> {
    let (src_path, tgt_path) = (base.join(src), base.join(tgt));
    let src_raw = read(&src_path)?;
    let tgt_raw = read(&tgt_path)?;
    let (src_lines, tgt_lines) = (lines_of(&src_raw), lines_of(&tgt_raw));
    check_counts(&src_path, src_lines.len(), &tgt_path, tgt_lines.len())?;

    let mut out = Vec::with_capacity(src_lines.len());
    for (i, (s, t)) in src_lines.iter().zip(&tgt_lines).enumerate() {
        let line_no = i + 1;
        let (source_text, target_text) = (nfc(s.trim()), nfc(t.trim()));
        let source_tokens = tokenize(&source_text, source_lang);
        let target_tokens = tokenize(&target_text, target_lang);
        if source_tokens.is_empty() {
            return Err(CorpusError::EmptySentence {
                path: src_path,
                line: line_no,
            });
        }
        if target_tokens.is_empty() {
            return Err(CorpusError::EmptySentence {
                path: tgt_path,
                line: line_no,
            });
        }
        out.push(SentencePair {
            source_text,
            target_text,
            source_tokens,
            target_tokens,
            domain: domain.to_string(),
            split,
            line_no,
        });
    }
    Ok(out)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || unicode_normalization::char::is_combining_mark(c)
}

/// Deterministic tokenizer.
///
/// Space-delimited languages: whitespace split, then every character that is
/// not a letter, digit or combining mark becomes its own token. Chinese,
/// Japanese and Korean: one token per character, except runs of ASCII letters
/// and digits, which stay whole.
pub fn tokenize(text: &str, lang: &Lang) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let cjk = lang.is_cjk();
    for c in text.chars() {
        let joins = if cjk {
            c.is_ascii_alphanumeric()
        } else {
            is_word_char(c)
        };
        if joins {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Parses one Pharaoh line (`0-0 1-2 ...`). An empty line is an unaligned
/// sentence. Duplicate links are preserved.
pub fn parse_alignment_line(line: &str) -> Result<Vec<AlignmentLink>, AlignmentParseError> {
    let mut links = Vec::new();
    let mut column = 1;
    let mut token = 0;
    let mut rest = line;
    while !rest.is_empty() {
        let ws = rest.len() - rest.trim_start().len();
        column += rest[..ws].chars().count();
        rest = &rest[ws..];
        if rest.is_empty() {
            break;
        }
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let tok = &rest[..end];
        token += 1;
        let parsed = tok
            .split_once('-')
            .and_then(|(i, j)| Some(AlignmentLink::new(parse_index(i)?, parse_index(j)?)));
        match parsed {
            Some(link) => links.push(link),
            None => {
                return Err(AlignmentParseError {
                    token,
                    column,
                    text: tok.to_string(),
                })
            }
        }
        column += tok.chars().count();
        rest = &rest[end..];
    }
    Ok(links)
}

fn parse_index(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

pub fn format_alignment_line(links: &[AlignmentLink]) -> String {
    links
        .iter()
        .map(|l| format!("{}-{}", l.src_index, l.tgt_index))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn en() -> Lang {
        Lang::new("en").unwrap()
    }
    fn zh() -> Lang {
        Lang::new("zh").unwrap()
    }

    #[test]
    fn tokenize_english_splits_punctuation() {
        assert_eq!(
            tokenize("He washed his hands in a basin.", &en()),
            ["He", "washed", "his", "hands", "in", "a", "basin", "."]
        );
    }

    #[test]
    fn tokenize_chinese_per_character() {
        assert_eq!(
            tokenize("他在盆里洗了手。", &zh()),
            ["他", "在", "盆", "里", "洗", "了", "手", "。"]
        );
    }

    #[test]
    fn tokenize_chinese_keeps_ascii_runs() {
        assert_eq!(tokenize("power12 系统", &zh()), ["power12", "系", "统"]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("", &en()).is_empty());
        assert!(tokenize("   ", &zh()).is_empty());
    }

    #[test]
    fn unknown_language_rejected() {
        assert!(matches!(
            Lang::new("xx"),
            Err(CorpusError::UnknownLanguage(_))
        ));
        assert_eq!(Lang::new("ZH").unwrap().display_name(), "Chinese");
    }

    #[test]
    fn alignment_lines() {
        assert_eq!(
            parse_alignment_line("0-0 1-2").unwrap(),
            [AlignmentLink::new(0, 0), AlignmentLink::new(1, 2)]
        );
        assert!(parse_alignment_line("").unwrap().is_empty());
        assert_eq!(parse_alignment_line("0-0 0-0").unwrap().len(), 2);
        let err = parse_alignment_line("3-x").unwrap_err();
        assert_eq!(err.token, 1);
        assert_eq!(err.column, 1);
        let err = parse_alignment_line("0-0  1-").unwrap_err();
        assert_eq!((err.token, err.column), (2, 6));
        assert!(parse_alignment_line("-1-2").is_err());
        assert!(parse_alignment_line("1-+2").is_err());
    }

    #[test]
    fn domain_ids() {
        assert!(validate_domain_id("law_2-b").is_ok());
        assert!(validate_domain_id("Law").is_err());
        assert!(validate_domain_id("").is_err());
    }

    proptest! {
        #[test]
        fn tokens_nonempty_and_preserve_characters(s in "\\PC{0,60}", cjk in any::<bool>()) {
            let lang = if cjk { zh() } else { en() };
            let toks = tokenize(&s, &lang);
            prop_assert!(toks.iter().all(|t| !t.is_empty()));
            let joined: String = toks.concat();
            let expected: String = s.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, expected);
        }

        #[test]
        fn alignment_format_round_trip(links in proptest::collection::vec((0usize..200, 0usize..200), 0..30)) {
            let links: Vec<_> = links.into_iter().map(|(i, j)| AlignmentLink::new(i, j)).collect();
            prop_assert_eq!(parse_alignment_line(&format_alignment_line(&links)).unwrap(), links);
        }
    }
}
