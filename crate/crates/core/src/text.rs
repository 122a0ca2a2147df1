//! Text normalization shared by lexicon keys, annotation matching and the
//! disambiguation metric.

use unicode_normalization::UnicodeNormalization;

pub fn nfc(text: &str) -> String {
    text.nfc().collect()
}

/// Normalized identity of a word: NFC, optionally lowercased.
pub fn normalize_word(token: &str, casefold: bool) -> String {
    let s = nfc(token);
    if casefold {
        s.to_lowercase()
    } else {
        s
    }
}

/// A token made only of punctuation or symbols (no letters, digits or marks).
pub fn is_punctuation_only(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| !c.is_alphanumeric() && !c.is_whitespace())
}
