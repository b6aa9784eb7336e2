//! Deterministic evaluation: document BLEU, terminology accuracy, chunking
//! agreement, cost averages, and externally computed scores.

mod bleu;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;
use crate::gateway::CostLedger;
use crate::lang::contains_cjk;

pub use bleu::{bleu_detail, d_bleu, BleuDetail, SMOOTHING};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference document is empty")]
    EmptyReference,
    #[error("term list is empty")]
    NoTerms,
    #[error("chunkings do not partition the same sentences: {0}")]
    PartitionMismatch(String),
    #[error("{path}:{line}: {message}")]
    ParseError { path: String, line: usize, message: String },
    #[error("score for unknown document {0:?}")]
    UnknownDocument(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermPair {
    pub source_term: String,
    pub target_term: String,
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn occurs_as_word(haystack: &str, needle: &str) -> bool {
    haystack.match_indices(needle).any(|(at, _)| {
        let before = haystack[..at].chars().next_back();
        let after = haystack[at + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Whether the (normalised) target term occurs in the (normalised) text:
/// substring match for terms in CJK script, whole-word match otherwise.
pub fn term_occurs(hypothesis: &str, target_term: &str) -> bool {
    let (hay, needle) = (normalize(hypothesis), normalize(target_term));
    if needle.is_empty() {
        return false;
    }
    if contains_cjk(&needle) {
        hay.contains(&needle)
    } else {
        occurs_as_word(&hay, &needle)
    }
}

/// Fraction of term pairs whose target rendering occurs in the hypothesis.
pub fn terminology_accuracy(hypothesis: &str, terms: &[TermPair]) -> Result<f64, MetricsError> {
    if terms.is_empty() {
        return Err(MetricsError::NoTerms);
    }
    let hits = terms.iter().filter(|t| term_occurs(hypothesis, &t.target_term)).count();
    Ok(hits as f64 / terms.len() as f64)
}

/// Reads a term list: JSON lines `{source_term, target_term}` or
/// tab-separated `source<TAB>target` lines. Blank lines and `#` comments
/// are skipped.
pub fn load_terms(path: &Path) -> Result<Vec<TermPair>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_terms(&text).map_err(|(line, message)| MetricsError::ParseError {
        path: path.display().to_string(),
        line,
        message,
    })
}

pub fn parse_terms(text: &str) -> Result<Vec<TermPair>, (usize, String)> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let pair = if line.trim_start().starts_with('{') {
            serde_json::from_str::<TermPair>(line).map_err(|e| (k + 1, e.to_string()))?
        } else {
            let (s, t) = line
                .split_once('\t')
                .ok_or((k + 1, "expected source<TAB>target".to_string()))?;
            TermPair {
                source_term: s.trim().to_string(),
                target_term: t.trim().to_string(),
            }
        };
        if pair.source_term.trim().is_empty() || pair.target_term.trim().is_empty() {
            return Err((k + 1, "empty term".into()));
        }
        out.push(pair);
    }
    Ok(out)
}

fn check_partition(chunks: &[Vec<usize>]) -> Result<BTreeSet<usize>, MetricsError> {
    let mut all = BTreeSet::new();
    for c in chunks {
        if c.is_empty() {
            return Err(MetricsError::PartitionMismatch("empty chunk".into()));
        }
        for &s in c {
            if !all.insert(s) {
                return Err(MetricsError::PartitionMismatch(format!("sentence {s} in two chunks")));
            }
        }
    }
    Ok(all)
}

/// Agreement of two chunkings of the same sentences. Each chunk of `a` is
/// matched to the chunk of `b` sharing the most sentences (earliest on
/// ties) and scored `overlap / max(|a_i|, |b_k|)`; the result is the mean.
pub fn overlap_rate(a: &[Vec<usize>], b: &[Vec<usize>]) -> Result<f64, MetricsError> {
    let (sa, sb) = (check_partition(a)?, check_partition(b)?);
    if sa != sb {
        return Err(MetricsError::PartitionMismatch("different sentence sets".into()));
    }
    if a.is_empty() {
        return Err(MetricsError::PartitionMismatch("no chunks".into()));
    }
    let sets_b: Vec<BTreeSet<usize>> = b.iter().map(|c| c.iter().copied().collect()).collect();
    let total: f64 = a
        .iter()
        .map(|ca| {
            let mut best = (0usize, 0usize);
            for (k, cb) in sets_b.iter().enumerate() {
                let overlap = ca.iter().filter(|s| cb.contains(s)).count();
                if overlap > best.0 {
                    best = (overlap, k);
                }
            }
            best.0 as f64 / ca.len().max(sets_b[best.1].len()) as f64
        })
        .sum();
    Ok(total / a.len() as f64)
}

pub fn chunk_overlap_rate(a: &[Chunk], b: &[Chunk]) -> Result<f64, MetricsError> {
    let sets = |c: &[Chunk]| c.iter().map(|x| x.sentence_indices.clone()).collect::<Vec<_>>();
    overlap_rate(&sets(a), &sets(b))
}

/// Per-document averages in the shape of a cost table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub avg_input_tokens_per_call: f64,
    pub avg_output_tokens_per_call: f64,
    pub avg_calls: f64,
    pub avg_total_tokens: f64,
}

pub fn cost_report(ledger: &CostLedger, n_documents: usize) -> CostReport {
    if ledger.calls == 0 {
        return CostReport::default();
    }
    let calls = ledger.calls as f64;
    let docs = n_documents.max(1) as f64;
    CostReport {
        avg_input_tokens_per_call: ledger.input_tokens as f64 / calls,
        avg_output_tokens_per_call: ledger.output_tokens as f64 / calls,
        avg_calls: calls / docs,
        avg_total_tokens: ledger.total_tokens() as f64 / docs,
    }
}

#[derive(Debug, Deserialize)]
struct ScoreRecord {
    metric_name: String,
    document_id: String,
    score: f64,
}

/// Externally computed scores, per metric and document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalScores {
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ExternalScores {
    /// Mean score per metric over the documents that have one.
    pub fn means(&self) -> BTreeMap<String, f64> {
        self.scores
            .iter()
            .map(|(name, per_doc)| (name.clone(), per_doc.values().sum::<f64>() / per_doc.len() as f64))
            .collect()
    }

    pub fn for_document(&self, id: &str) -> BTreeMap<String, f64> {
        self.scores
            .iter()
            .filter_map(|(name, per_doc)| per_doc.get(id).map(|s| (name.clone(), *s)))
            .collect()
    }
}

/// Reads JSON-lines `{metric_name, document_id, score}` records, rejecting
/// documents outside `known_ids`.
pub fn ingest_external_scores(path: &Path, known_ids: &[String]) -> Result<ExternalScores, MetricsError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = ExternalScores::default();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(line).map_err(|e| MetricsError::ParseError {
            path: shown.clone(),
            line: k + 1,
            message: e.to_string(),
        })?;
        if !rec.score.is_finite() {
            return Err(MetricsError::ParseError {
                path: shown,
                line: k + 1,
                message: "score is not finite".into(),
            });
        }
        if !known_ids.contains(&rec.document_id) {
            return Err(MetricsError::UnknownDocument(rec.document_id));
        }
        out.scores
            .entry(rec.metric_name)
            .or_default()
            .insert(rec.document_id, rec.score);
    }
    Ok(out)
}

/// Metrics for one document (or a whole run); absent fields were not
/// computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_bleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu_smoothing: Option<String>,
    /// Fraction in [0, 1].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminology_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_scores: BTreeMap<String, f64>,
    pub cost: CostLedger,
    pub cost_report: CostReport,
}
