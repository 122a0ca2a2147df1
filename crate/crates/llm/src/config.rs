use ambig_core::prompts::{ChatMessage, TemplateId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_input_tokens: usize,
    pub max_input_tokens_few_shot: usize,
    pub max_output_tokens: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model_name: "gpt-3.5-turbo".into(),
            temperature: 0.8,
            top_p: 0.95,
            max_input_tokens: 1024,
            max_input_tokens_few_shot: 3000,
            max_output_tokens: 512,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.max_input_tokens == 0
            || self.max_input_tokens_few_shot == 0
            || self.max_output_tokens == 0
        {
            return Err("token limits must be positive".into());
        }
        if self.model_name.trim().is_empty() {
            return Err("model_name is empty".into());
        }
        Ok(())
    }

    /// Input budget for one strategy: few-shot strategies get the larger one.
    pub fn input_limit(&self, template: TemplateId) -> usize {
        if template.is_few_shot() {
            self.max_input_tokens_few_shot
        } else {
            self.max_input_tokens
        }
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F)
}

/// Rough token count: one per run of non-CJK letters/digits, one per CJK
/// character, one per other non-space character.
pub fn estimate_tokens(text: &str) -> usize {
    let mut n = 0;
    let mut in_word = false;
    for c in text.chars() {
        if c.is_alphanumeric() && !is_cjk(c) {
            if !in_word {
                n += 1;
                in_word = true;
            }
        } else {
            in_word = false;
            if !c.is_whitespace() {
                n += 1;
            }
        }
    }
    n
}

pub fn estimate_messages(messages: &[ChatMessage]) -> usize {
    messages.iter().map(|m| estimate_tokens(&m.content)).sum()
}
