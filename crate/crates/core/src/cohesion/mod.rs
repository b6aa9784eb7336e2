//! LLM-as-judge cohesion evaluation of pronoun and conjunction translation.
//!
//! The judge first annotates the source with inline `[word]<...>` spans,
//! then grades each span against the translation by adding
//! `target_translation`, `is_correct` and `error_type` attributes.

mod grammar;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError, Stage};
use crate::prompts;

pub use grammar::{parse_annotations, Annotated, AnnotationSpan, EvalAttrs, Rendering, Segment, PRONOUN_TYPES};

#[derive(Debug, Error)]
pub enum CohesionError {
    #[error("document is empty")]
    EmptyDocument,
    #[error("malformed annotation: {0}")]
    MalformedSpan(String),
    #[error("invalid annotation attribute: {0}")]
    InvalidAttribute(String),
    #[error("annotated source does not parse: {0}")]
    ParseFailure(String),
    #[error("span [{0}] has no evaluation attributes")]
    MissingEvalAttrs(String),
    #[error("no annotated spans to score")]
    EmptySpanList,
    #[error("spans from different dimensions cannot be scored together")]
    MixedDimensions,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    /// Pronoun reference.
    Coreference,
    Conjunction,
}

impl Dimension {
    pub const ALL: [Dimension; 2] = [Dimension::Coreference, Dimension::Conjunction];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Coreference => "coreference",
            Dimension::Conjunction => "conjunction",
        }
    }

    pub fn parse(s: &str) -> Option<Dimension> {
        match s.trim().to_lowercase().as_str() {
            "coreference" | "pronoun" | "pronouns" => Some(Dimension::Coreference),
            "conjunction" | "conjunctions" => Some(Dimension::Conjunction),
            _ => None,
        }
    }

    /// Error categories spelled out in the evaluation instructions (plus
    /// those used in its worked example). Anything else is still accepted
    /// but reported as unlisted.
    pub fn listed_error_types(self) -> &'static [&'static str] {
        match self {
            Dimension::Coreference => &["gender_mismatch", "wrong_referent", "missing_translation"],
            Dimension::Conjunction => &[
                "wrong_conjunction",
                "missing_conjunction",
                "redundant_conjunction",
                "inappropriate_addition",
                "wrong_position",
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohesionScore {
    pub dimension: Dimension,
    pub total: usize,
    pub correct: usize,
    /// Percentage of correctly rendered spans.
    pub accuracy: f64,
    /// Error types of incorrect spans; an incorrect span without an error
    /// type is tallied as "unspecified".
    pub error_breakdown: BTreeMap<String, usize>,
    /// Incorrect spans whose error type is not one of the listed categories.
    pub unlisted_errors: usize,
}

pub fn score_cohesion(spans: &[AnnotationSpan]) -> Result<CohesionScore, CohesionError> {
    let first = spans.first().ok_or(CohesionError::EmptySpanList)?;
    let dimension = first.dimension;
    let mut correct = 0;
    let mut error_breakdown = BTreeMap::new();
    let mut unlisted_errors = 0;
    for s in spans {
        if s.dimension != dimension {
            return Err(CohesionError::MixedDimensions);
        }
        let eval = s
            .eval
            .as_ref()
            .ok_or_else(|| CohesionError::MissingEvalAttrs(s.surface.clone()))?;
        if eval.is_correct {
            correct += 1;
            continue;
        }
        let kind = eval.error_type.clone().unwrap_or_else(|| "unspecified".to_string());
        if !dimension.listed_error_types().contains(&kind.as_str()) {
            unlisted_errors += 1;
        }
        *error_breakdown.entry(kind).or_insert(0) += 1;
    }
    Ok(CohesionScore {
        dimension,
        total: spans.len(),
        correct,
        accuracy: 100.0 * correct as f64 / spans.len() as f64,
        error_breakdown,
        unlisted_errors,
    })
}

/// Scores an already-evaluated annotated text without calling a judge.
pub fn score_annotated(text: &str, dimension: Dimension) -> Result<CohesionScore, CohesionError> {
    let parsed = parse_annotations(text, dimension, true)?;
    let spans: Vec<AnnotationSpan> = parsed.spans().cloned().collect();
    score_cohesion(&spans)
}

pub fn build_annotation_prompt(source: &str, dimension: Dimension) -> Result<ChatRequest, CohesionError> {
    if source.trim().is_empty() {
        return Err(CohesionError::EmptyDocument);
    }
    let template = match dimension {
        Dimension::Coreference => prompts::PRONOUN_ANNOTATION,
        Dimension::Conjunction => prompts::CONJUNCTION_ANNOTATION,
    };
    let text = format!(
        "{template}{}",
        prompts::render(prompts::ANNOTATION_INPUT, &[("document", source)])
    );
    Ok(ChatRequest::new(Stage::Judge, text))
}

pub fn build_evaluation_prompt(
    annotated: &str,
    translation: &str,
    dimension: Dimension,
) -> Result<ChatRequest, CohesionError> {
    parse_annotations(annotated, dimension, false).map_err(|e| CohesionError::ParseFailure(e.to_string()))?;
    if translation.trim().is_empty() {
        return Err(CohesionError::EmptyDocument);
    }
    let template = match dimension {
        Dimension::Coreference => prompts::PRONOUN_EVALUATION,
        Dimension::Conjunction => prompts::CONJUNCTION_EVALUATION,
    };
    let input = prompts::render(
        prompts::EVALUATION_INPUT,
        &[("annotated", annotated), ("translation", translation)],
    );
    Ok(ChatRequest::new(Stage::Judge, format!("{template}{input}")))
}

/// Strips one surrounding code fence, which judges tend to add.
pub fn unfence(reply: &str) -> &str {
    let trimmed = reply.trim();
    let Some(open) = trimmed.find("```") else {
        return trimmed;
    };
    let body_start = match trimmed[open..].find('\n') {
        Some(nl) => open + nl + 1,
        None => return trimmed,
    };
    match trimmed[body_start..].rfind("```") {
        Some(close) => trimmed[body_start..body_start + close].trim_end_matches(['\n', '\r']),
        None => &trimmed[body_start..],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohesionOutcome {
    pub score: CohesionScore,
    pub annotated_source: String,
    pub evaluated: String,
    /// The judge's annotated text does not reduce to the source document.
    pub anchor_mismatch: bool,
}

/// Annotates the source, grades the annotations against the translation,
/// and scores the result.
pub fn evaluate_cohesion(
    source: &str,
    translation: &str,
    dimension: Dimension,
    gateway: &Gateway,
    max_retries: u32,
) -> Result<CohesionOutcome, CohesionError> {
    let request = build_annotation_prompt(source, dimension)?;
    let annotated = gateway.complete_parsed(&request, max_retries, |raw| {
        let body = unfence(raw);
        parse_annotations(body, dimension, false)
            .map(|a| (body.to_string(), a))
            .map_err(|e| e.to_string())
    })?;
    let (annotated_text, annotated) = annotated;
    let mut anchor_mismatch = annotated.plain_text().trim() != source.trim();

    let request = build_evaluation_prompt(&annotated_text, translation, dimension)?;
    let (evaluated_text, evaluated) = gateway.complete_parsed(&request, max_retries, |raw| {
        let body = unfence(raw);
        parse_annotations(body, dimension, true)
            .map(|a| (body.to_string(), a))
            .map_err(|e| e.to_string())
    })?;
    if evaluated.plain_text().trim() != annotated.plain_text().trim() {
        anchor_mismatch = true;
    }
    if anchor_mismatch {
        tracing::warn!(
            dimension = dimension.as_str(),
            "judge annotations do not match the source text"
        );
    }
    let spans: Vec<AnnotationSpan> = evaluated.spans().cloned().collect();
    Ok(CohesionOutcome {
        score: score_cohesion(&spans)?,
        annotated_source: annotated_text,
        evaluated: evaluated_text,
        anchor_mismatch,
    })
}

fn pronoun_type(word: &str) -> Option<&'static str> {
    Some(match word {
        "he" | "she" | "it" | "they" | "him" | "her" | "them" | "we" | "us" => "personal",
        "his" | "its" | "their" | "our" | "hers" | "theirs" | "ours" => "possessive",
        "himself" | "herself" | "itself" | "themselves" | "ourselves" => "reflexive",
        "who" | "whom" | "whose" | "which" => "relative",
        _ => return None,
    })
}

fn conjunction_attrs(word: &str) -> Option<(&'static str, &'static str)> {
    Some(match word {
        "and" => ("coordinating", "addition"),
        "but" | "yet" => ("coordinating", "contrast"),
        "or" => ("coordinating", "alternative"),
        "so" => ("coordinating", "result"),
        "because" | "since" => ("subordinating", "cause"),
        "although" | "though" => ("subordinating", "concession"),
        "if" | "unless" => ("subordinating", "condition"),
        "while" | "when" => ("subordinating", "time"),
        "however" | "nevertheless" => ("conjunctive_adverb", "contrast"),
        "therefore" | "consequently" | "thus" => ("conjunctive_adverb", "result"),
        "moreover" | "furthermore" => ("conjunctive_adverb", "addition"),
        "meanwhile" | "then" => ("conjunctive_adverb", "sequence"),
        _ => return None,
    })
}

/// Lexicon-based annotation used by the synthetic judge: every word found
/// in a small fixed pronoun or conjunction list is annotated.
pub fn lexicon_annotate(document: &str, dimension: Dimension) -> String {
    let mut out = String::with_capacity(document.len() * 2);
    let mut word_start: Option<usize> = None;
    let flush = |out: &mut String, word: &str| {
        let lower = word.to_lowercase();
        let attrs = match dimension {
            Dimension::Coreference => pronoun_type(&lower).map(|t| format!("type=\"{t}\" referent=\"unresolved\"")),
            Dimension::Conjunction => {
                conjunction_attrs(&lower).map(|(t, r)| format!("type=\"{t}\" relationship=\"{r}\""))
            }
        };
        match attrs {
            Some(a) => out.push_str(&format!("[{word}]<{a}>")),
            None => out.push_str(word),
        }
    };
    for (i, c) in document.char_indices() {
        if c.is_alphabetic() {
            word_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = word_start.take() {
            flush(&mut out, &document[s..i]);
        }
        out.push(c);
    }
    if let Some(s) = word_start {
        flush(&mut out, &document[s..]);
    }
    out
}

/// Grades every span as correctly rendered by its own surface form; used
/// by the synthetic judge.
pub fn mark_all_correct(annotated: &str, dimension: Dimension) -> Result<String, CohesionError> {
    let mut parsed = parse_annotations(annotated, dimension, false)?;
    for span in parsed.spans_mut() {
        let surface = span.surface.clone();
        span.set_attr("target_translation", &surface);
        span.set_attr("is_correct", "true");
        span.set_attr("error_type", "null");
    }
    Ok(parsed.render())
}
