//! In-process backends for tests and offline runs.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ChatBackend, ChatRequest, ChatResponse};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockFallback {
    /// Words without a dictionary entry are kept as they are.
    #[default]
    Echo,
    /// Only dictionary translations are emitted.
    Drop,
}

/// Word-by-word dictionary "translator" working from the request's source
/// sentence. Lookups try the exact word, then ignore case. Every
/// turn of a conversation gets the same answer.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    pub dictionary: BTreeMap<String, String>,
    pub fallback: MockFallback,
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{Alphabetic}\p{N}\p{M}_']+").expect("valid regex"))
}

impl MockBackend {
    pub fn new(dictionary: BTreeMap<String, String>, fallback: MockFallback) -> Self {
        MockBackend {
            dictionary,
            fallback,
        }
    }

    fn lookup(&self, word: &str) -> Option<&String> {
        self.dictionary.get(word).or_else(|| {
            let lower = word.to_lowercase();
            self.dictionary
                .iter()
                .find(|(k, _)| k.to_lowercase() == lower)
                .map(|(_, v)| v)
        })
    }

    pub fn translate(&self, source: &str) -> String {
        match self.fallback {
            MockFallback::Echo => word_regex()
                .replace_all(source, |c: &regex::Captures| {
                    self.lookup(&c[0])
                        .cloned()
                        .unwrap_or_else(|| c[0].to_string())
                })
                .into_owned(),
            MockFallback::Drop => word_regex()
                .find_iter(source)
                .filter_map(|m| self.lookup(m.as_str()).cloned())
                .collect::<Vec<_>>()
                .join(" "),
        }
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    fn name(&self) -> String {
        "mock".into()
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        Ok(ChatResponse {
            text: self.translate(&request.source),
        })
    }

    fn reports_latency(&self) -> bool {
        false
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync;

/// A backend answering through a closure (scripted judges, failure
/// injection).
pub struct FnBackend {
    name: String,
    f: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        name: &str,
        f: impl Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        FnBackend {
            name: name.to_string(),
            f: Box::new(f),
        }
    }
}

#[async_trait]
impl ChatBackend for FnBackend {
    fn name(&self) -> String {
        self.name.clone()
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (self.f)(request).map(|text| ChatResponse { text })
    }

    fn reports_latency(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn echo_and_drop() {
        let m = MockBackend::new(
            dict(&[("Hello", "你好"), ("power", "权力")]),
            MockFallback::Echo,
        );
        assert_eq!(m.translate("Hello"), "你好");
        assert_eq!(m.translate("Power to the people."), "权力 to the people.");
        let d = MockBackend::new(m.dictionary.clone(), MockFallback::Drop);
        assert_eq!(d.translate("Power to the people, hello."), "权力 你好");
        assert_eq!(
            MockBackend::default().translate("as is, really."),
            "as is, really."
        );
    }
}
