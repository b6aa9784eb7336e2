//! Language codes and script helpers.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A BCP-47-ish language code such as `en`, `zh` or `pt-BR`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Language(String);

impl Language {
    pub fn new(code: impl Into<String>) -> Self {
        Language(code.into().trim().to_string())
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    fn primary(&self) -> String {
        self.0.split(['-', '_']).next().unwrap_or_default().to_ascii_lowercase()
    }

    /// Languages written without spaces between words.
    pub fn is_cjk(&self) -> bool {
        matches!(self.primary().as_str(), "zh" | "ja" | "ko" | "yue")
    }

    /// English name used when rendering prompts; unknown codes fall back to
    /// the code itself.
    pub fn display_name(&self) -> String {
        let name = match self.primary().as_str() {
            "en" => "English",
            "zh" => "Chinese",
            "de" => "German",
            "ja" => "Japanese",
            "fr" => "French",
            "pt" => "Portuguese",
            "ru" => "Russian",
            "es" => "Spanish",
            "it" => "Italian",
            "ko" => "Korean",
            "ar" => "Arabic",
            "nl" => "Dutch",
            _ => return self.0.clone(),
        };
        name.to_string()
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Language {
    fn from(s: &str) -> Self {
        Language::new(s)
    }
}

/// Characters tokenized one-per-token: Han ideographs, kana and Hangul.
pub fn is_cjk_char(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x309F   // hiragana
        | 0x30A0..=0x30FF // katakana
        | 0x31F0..=0x31FF
        | 0x3400..=0x4DBF
        | 0x4E00..=0x9FFF
        | 0xAC00..=0xD7AF // hangul syllables
        | 0xF900..=0xFAFF
        | 0xFF66..=0xFF9F
        | 0x20000..=0x2FA1F)
}

pub fn contains_cjk(text: &str) -> bool {
    text.chars().any(is_cjk_char)
}
