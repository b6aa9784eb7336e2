//! Deterministic token estimation.

use serde::{Deserialize, Serialize};

use crate::lang::is_cjk_char;

/// Tokenizer used for window sizing, cost estimation and BLEU.
///
/// `Default` splits text into maximal alphanumeric runs, emits every other
/// non-whitespace character as its own token, and counts each CJK character
/// as one token. Provider-reported usage overrides these estimates in the
/// ledger whenever a backend supplies it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenizer {
    #[default]
    Default,
    /// Whitespace-separated words.
    Whitespace,
    /// Every non-whitespace character is a token.
    Char,
}

impl Tokenizer {
    pub fn parse(name: &str) -> Option<Tokenizer> {
        match name.trim().to_ascii_lowercase().as_str() {
            "default" | "unicode" => Some(Tokenizer::Default),
            "whitespace" | "ws" => Some(Tokenizer::Whitespace),
            "char" | "character" => Some(Tokenizer::Char),
            _ => None,
        }
    }

    /// Token slices of `text` in order.
    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().collect(),
            Tokenizer::Char => text
                .char_indices()
                .filter(|(_, c)| !c.is_whitespace())
                .map(|(i, c)| &text[i..i + c.len_utf8()])
                .collect(),
            Tokenizer::Default => default_tokens(text),
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().count(),
            Tokenizer::Char => text.chars().filter(|c| !c.is_whitespace()).count(),
            Tokenizer::Default => default_tokens(text).len(),
        }
    }
}

fn default_tokens(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        let in_run = c.is_alphanumeric() && !is_cjk_char(c);
        if in_run {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = run_start.take() {
            out.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            out.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = run_start {
        out.push(&text[s..]);
    }
    out
}

/// Token count under the default tokenizer.
pub fn estimate_tokens(text: &str) -> usize {
    Tokenizer::Default.count(text)
}
