//! The inline annotation grammar: `[surface]<key="value" key="value">`.

use serde::{Deserialize, Serialize};

use super::{CohesionError, Dimension};

pub const PRONOUN_TYPES: [&str; 5] = ["personal", "possessive", "demonstrative", "reflexive", "relative"];

const EVAL_KEYS: [&str; 3] = ["target_translation", "is_correct", "error_type"];

/// How an annotated item surfaced in the translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "text")]
pub enum Rendering {
    Words(String),
    /// Appropriately dropped (pro-drop targets); always correct.
    Omitted,
    /// Absent where it was needed; always incorrect.
    Missing,
}

impl Rendering {
    fn parse(raw: &str) -> Rendering {
        match raw {
            "omitted" => Rendering::Omitted,
            "missing" => Rendering::Missing,
            other => Rendering::Words(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalAttrs {
    pub target_translation: Rendering,
    pub is_correct: bool,
    /// `None` for the literal "null".
    pub error_type: Option<String>,
}

/// One annotated pronoun or conjunction. `attrs` keeps every attribute in
/// source order (evaluation attributes included) so rendering is loss-free;
/// `eval` is the validated view of the evaluation attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSpan {
    pub surface: String,
    pub dimension: Dimension,
    pub attrs: Vec<(String, String)>,
    pub eval: Option<EvalAttrs>,
}

impl AnnotationSpan {
    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let attrs: Vec<String> = self.attrs.iter().map(|(k, v)| format!("{k}=\"{v}\"")).collect();
        format!("[{}]<{}>", self.surface, attrs.join(" "))
    }

    /// Replaces (or appends) an attribute, keeping its position if present.
    pub fn set_attr(&mut self, key: &str, value: &str) {
        match self.attrs.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.attrs.push((key.to_string(), value.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Text(String),
    Span(AnnotationSpan),
}

/// A parsed annotated document.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Annotated {
    pub segments: Vec<Segment>,
}

impl Annotated {
    pub fn spans(&self) -> impl Iterator<Item = &AnnotationSpan> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Span(a) => Some(a),
            Segment::Text(_) => None,
        })
    }

    pub fn spans_mut(&mut self) -> impl Iterator<Item = &mut AnnotationSpan> {
        self.segments.iter_mut().filter_map(|s| match s {
            Segment::Span(a) => Some(a),
            Segment::Text(_) => None,
        })
    }

    /// The document with every annotation reduced to its surface word.
    pub fn plain_text(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.as_str(),
                Segment::Span(a) => a.surface.as_str(),
            })
            .collect()
    }

    pub fn render(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Text(t) => t.clone(),
                Segment::Span(a) => a.render(),
            })
            .collect()
    }
}

fn malformed(at: usize, what: &str) -> CohesionError {
    CohesionError::MalformedSpan(format!("{what} at byte {at}"))
}

fn invalid(surface: &str, what: impl std::fmt::Display) -> CohesionError {
    CohesionError::InvalidAttribute(format!("[{surface}]: {what}"))
}

// Parses `key="value" ...>` starting just after `<`; returns the attributes
// and the byte offset after `>`.
fn parse_attr_block(text: &str, start: usize) -> Result<(Vec<(String, String)>, usize), CohesionError> {
    let bytes = text.as_bytes();
    let mut attrs = Vec::new();
    let mut pos = start;
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        match bytes.get(pos) {
            None => return Err(malformed(start, "unterminated attribute block")),
            Some(b'>') => return Ok((attrs, pos + 1)),
            _ => {}
        }
        let key_start = pos;
        while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
            pos += 1;
        }
        if pos == key_start {
            return Err(malformed(pos, "expected attribute name"));
        }
        let key = &text[key_start..pos];
        if bytes.get(pos) != Some(&b'=') || bytes.get(pos + 1) != Some(&b'"') {
            return Err(malformed(pos, "expected =\" after attribute name"));
        }
        let value_start = pos + 2;
        let value_len = text[value_start..]
            .find('"')
            .ok_or_else(|| malformed(value_start, "unterminated attribute value"))?;
        attrs.push((key.to_string(), text[value_start..value_start + value_len].to_string()));
        pos = value_start + value_len + 1;
    }
}

fn validate(
    surface: &str,
    dimension: Dimension,
    attrs: &[(String, String)],
    expect_eval: bool,
) -> Result<Option<EvalAttrs>, CohesionError> {
    let base_keys: &[&str] = match dimension {
        Dimension::Coreference => &["type", "referent"],
        Dimension::Conjunction => &["type", "relationship"],
    };
    let mut seen: Vec<&str> = Vec::new();
    for (k, _) in attrs {
        if !base_keys.contains(&k.as_str()) && !EVAL_KEYS.contains(&k.as_str()) {
            return Err(invalid(surface, format_args!("unknown attribute {k:?}")));
        }
        if seen.contains(&k.as_str()) {
            return Err(invalid(surface, format_args!("duplicate attribute {k:?}")));
        }
        seen.push(k);
    }
    let get = |key: &str| attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let kind = get("type").ok_or_else(|| invalid(surface, "missing type"))?;
    if dimension == Dimension::Coreference && !PRONOUN_TYPES.contains(&kind) {
        return Err(invalid(
            surface,
            format_args!("pronoun type {kind:?} is not one of {PRONOUN_TYPES:?}"),
        ));
    }

    let present = EVAL_KEYS.iter().filter(|k| get(k).is_some()).count();
    if present == 0 {
        if expect_eval {
            return Err(invalid(surface, "evaluation attributes missing"));
        }
        return Ok(None);
    }
    if present < EVAL_KEYS.len() {
        return Err(invalid(surface, "incomplete evaluation attributes"));
    }
    let rendering = Rendering::parse(get("target_translation").unwrap_or_default());
    let is_correct = match get("is_correct") {
        Some("true") => true,
        Some("false") => false,
        other => {
            return Err(invalid(
                surface,
                format_args!("is_correct must be true or false, got {other:?}"),
            ))
        }
    };
    match (&rendering, is_correct) {
        (Rendering::Omitted, _) if dimension == Dimension::Conjunction => {
            return Err(invalid(surface, "conjunctions cannot be \"omitted\""))
        }
        (Rendering::Omitted, false) => return Err(invalid(surface, "an omitted rendering must be correct")),
        (Rendering::Missing, true) => return Err(invalid(surface, "a missing rendering cannot be correct")),
        _ => {}
    }
    let error_type = match get("error_type") {
        Some("null") | None => None,
        Some(e) => Some(e.to_string()),
    };
    Ok(Some(EvalAttrs {
        target_translation: rendering,
        is_correct,
        error_type,
    }))
}

/// Parses an annotated document. Brackets not followed by an attribute
/// block are ordinary text; a `]<` with no opening bracket (which is how
/// nesting shows up) is rejected.
pub fn parse_annotations(text: &str, dimension: Dimension, expect_eval: bool) -> Result<Annotated, CohesionError> {
    let mut segments = Vec::new();
    let mut plain = String::new();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let Some(rel) = rest.find(['[', ']']) else {
            plain.push_str(rest);
            break;
        };
        let at = pos + rel;
        plain.push_str(&text[pos..at]);
        if text.as_bytes()[at] == b']' {
            if text[at + 1..].starts_with('<') {
                return Err(malformed(at, "annotation closes without an opening bracket"));
            }
            plain.push(']');
            pos = at + 1;
            continue;
        }
        let after = &text[at + 1..];
        let close = after.find(']');
        let reopen = after.find('[');
        let close = match (close, reopen) {
            (Some(c), Some(o)) if o < c => None,
            (c, _) => c,
        };
        let Some(close) = close.map(|c| at + 1 + c) else {
            plain.push('[');
            pos = at + 1;
            continue;
        };
        if !text[close + 1..].starts_with('<') {
            plain.push_str(&text[at..=close]);
            pos = close + 1;
            continue;
        }
        let surface = &text[at + 1..close];
        if surface.is_empty() {
            return Err(malformed(at, "empty annotated surface"));
        }
        let (attrs, end) = parse_attr_block(text, close + 2)?;
        let eval = validate(surface, dimension, &attrs, expect_eval)?;
        if !plain.is_empty() {
            segments.push(Segment::Text(std::mem::take(&mut plain)));
        }
        segments.push(Segment::Span(AnnotationSpan {
            surface: surface.to_string(),
            dimension,
            attrs,
            eval,
        }));
        pos = end;
    }
    if !plain.is_empty() {
        segments.push(Segment::Text(plain));
    }
    Ok(Annotated { segments })
}
