//! Rule-based sentence segmentation.

use serde::{Deserialize, Serialize};

use super::ChunkError;
use crate::lang::Language;

/// One sentence of a document; `span` is a byte range into the source and
/// `text` is the slice it covers (without surrounding whitespace).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub span: (usize, usize),
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "cf", "fig", "figs", "eq", "eqs", "vol",
    "inc", "ltd", "corp", "co", "al", "approx", "dept", "jan", "feb", "aug", "sep", "sept", "oct", "nov", "dec", "u.s",
    "u.k", "mt", "gen", "col", "lt", "sgt", "capt", "rev", "hon",
];

fn is_terminal(c: char) -> bool {
    matches!(
        c,
        '.' | '!' | '?' | '。' | '！' | '？' | '．' | '｡' | '…' | '‼' | '⁇' | '⁈' | '⁉' | '؟' | '।'
    )
}

fn is_wide_terminal(c: char) -> bool {
    matches!(c, '。' | '！' | '？' | '．' | '｡')
}

fn is_closer(c: char) -> bool {
    matches!(
        c,
        '"' | '\'' | '”' | '’' | '»' | ')' | ']' | '）' | '」' | '』' | '】' | '〉' | '》'
    )
}

/// Last whitespace-delimited word before byte offset `end`, lowercased and
/// stripped of leading brackets/quotes.
fn last_word(text: &str, end: usize) -> String {
    let head = &text[..end];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(0);
    head[start..]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

fn is_abbreviation(text: &str, dot_at: usize) -> bool {
    let w = last_word(text, dot_at);
    !w.is_empty() && ABBREVIATIONS.contains(&w.as_str())
}

/// Splits a document into sentences.
///
/// A sentence ends at a run of terminal punctuation (plus closing quotes or
/// brackets) that is followed by whitespace or the end of the text; wide
/// CJK terminators end a sentence unconditionally. A single `.` after a
/// known abbreviation does not end a sentence for non-CJK languages. A blank
/// line always ends a sentence.
pub fn segment_sentences(document: &str, language: &Language) -> Result<Vec<Sentence>, ChunkError> {
    if document.trim().is_empty() {
        return Err(ChunkError::EmptyDocument);
    }
    let guard_abbreviations = !language.is_cjk();
    let chars: Vec<(usize, char)> = document.char_indices().collect();
    let n = chars.len();
    let pos_of = |k: usize| if k < n { chars[k].0 } else { document.len() };

    let mut out: Vec<Sentence> = Vec::new();
    let push = |start: usize, end: usize, out: &mut Vec<Sentence>| {
        let text = document[start..end].trim_end();
        if !text.is_empty() {
            out.push(Sentence {
                index: out.len(),
                text: text.to_string(),
                span: (start, start + text.len()),
            });
        }
    };

    let mut start: Option<usize> = None;
    let mut i = 0;
    while i < n {
        let (pos, c) = chars[i];
        if start.is_none() {
            if !c.is_whitespace() {
                start = Some(pos);
            } else {
                i += 1;
                continue;
            }
        }
        let s = start.expect("set above");
        if is_terminal(c) {
            let mut j = i + 1;
            while j < n && (is_terminal(chars[j].1) || is_closer(chars[j].1)) {
                j += 1;
            }
            let run = &chars[i..j];
            let wide = run.iter().any(|(_, ch)| is_wide_terminal(*ch));
            let mut boundary = wide || j == n || chars[j].1.is_whitespace();
            let single_dot = run.iter().filter(|(_, ch)| is_terminal(*ch)).count() == 1 && c == '.';
            if boundary && !wide && single_dot && guard_abbreviations && is_abbreviation(document, pos) {
                boundary = false;
            }
            if boundary {
                push(s, pos_of(j), &mut out);
                start = None;
            }
            i = j;
            continue;
        }
        if c == '\n' {
            // blank line: newline, optional spaces, newline
            let mut j = i + 1;
            while j < n && chars[j].1.is_whitespace() && chars[j].1 != '\n' {
                j += 1;
            }
            if j < n && chars[j].1 == '\n' {
                push(s, pos, &mut out);
                start = None;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if let Some(s) = start {
        push(s, document.len(), &mut out);
    }
    Ok(out)
}
