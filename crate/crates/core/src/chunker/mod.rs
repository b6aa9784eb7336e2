//! Stage-1 segmentation into sentence-aligned chunks.
//!
//! The document is walked in windows of whole sentences holding roughly
//! `T` tokens. For each window the model proposes a grouping of the numbered
//! sentences; a trailing sentence it marks as `carry_over` is prepended to
//! the next window instead of being finalised.

mod segment;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::{extract_json_block, ChatRequest, Gateway, GatewayError, Stage, Tokenizer};
use crate::lang::Language;
use crate::prompts;

pub use segment::{segment_sentences, Sentence};

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("document is empty")]
    EmptyDocument,
    #[error("chunk proposal does not cover the window: {0}")]
    Coverage(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// A contiguous run of sentences. `text` runs from the first sentence up to
/// the start of the next chunk, so concatenating all chunk texts in id order
/// reproduces the document exactly (the first chunk also carries any leading
/// whitespace).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: usize,
    pub sentence_indices: Vec<usize>,
    pub text: String,
    pub token_count: usize,
    #[serde(default)]
    pub rationale: String,
}

impl Chunk {
    /// Text without surrounding whitespace; what gets shown to the model.
    pub fn body(&self) -> &str {
        self.text.trim()
    }

    pub fn leading_whitespace(&self) -> &str {
        &self.text[..self.text.len() - self.text.trim_start().len()]
    }

    pub fn trailing_whitespace(&self) -> &str {
        &self.text[self.text.trim_end().len()..]
    }
}

/// Builds chunks from contiguous sentence groups covering every sentence.
pub fn assemble_chunks(
    document: &str,
    sentences: &[Sentence],
    groups: Vec<(Vec<usize>, String)>,
    tokenizer: Tokenizer,
) -> Result<Vec<Chunk>, ChunkError> {
    let mut expected = 0;
    for (g, _) in &groups {
        if g.is_empty() {
            return Err(ChunkError::Coverage("empty chunk".into()));
        }
        for &i in g {
            if i != expected {
                return Err(ChunkError::Coverage(format!("expected sentence {expected}, found {i}")));
            }
            expected += 1;
        }
    }
    if expected != sentences.len() {
        return Err(ChunkError::Coverage(format!(
            "{} of {} sentences assigned",
            expected,
            sentences.len()
        )));
    }
    let starts: Vec<usize> = groups
        .iter()
        .enumerate()
        .map(|(k, (g, _))| if k == 0 { 0 } else { sentences[g[0]].span.0 })
        .collect();
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(k, (sentence_indices, rationale))| {
            let end = starts.get(k + 1).copied().unwrap_or(document.len());
            let text = document[starts[k]..end].to_string();
            Chunk {
                id: k + 1,
                token_count: tokenizer.count(&text),
                sentence_indices,
                text,
                rationale,
            }
        })
        .collect())
}

/// A window handed to the chunking prompt: previously carried sentences
/// followed by new ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSlice {
    pub sentence_indices: Vec<usize>,
    /// Number of leading entries that were carried from the previous window.
    pub carried: usize,
    /// Cursor after the new sentences consumed by this window.
    pub next_cursor: usize,
}

impl WindowSlice {
    pub fn is_empty(&self) -> bool {
        self.sentence_indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sentence_indices.len()
    }
}

/// Takes `carry` plus the shortest run of sentences from `cursor` whose
/// cumulative token count reaches `budget` (or everything left). At least
/// one new sentence is taken when any remain.
pub fn take_window(token_counts: &[usize], cursor: usize, budget: usize, carry: &[usize]) -> WindowSlice {
    let mut indices = carry.to_vec();
    let mut total = 0;
    let mut next = cursor.min(token_counts.len());
    while next < token_counts.len() {
        total += token_counts[next];
        indices.push(next);
        next += 1;
        if total >= budget {
            break;
        }
    }
    WindowSlice {
        sentence_indices: indices,
        carried: carry.len(),
        next_cursor: next,
    }
}

/// One entry of a model chunking proposal, with document-global indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedChunk {
    pub chunk_id: String,
    pub rationale: String,
    pub sentence_indices: Vec<usize>,
    pub carry_over: bool,
}

/// A validated proposal for one window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkProposal {
    pub chunks: Vec<ProposedChunk>,
    /// Sentences deferred to the next window: the carry-over entry plus any
    /// uncovered tail after it.
    pub carried: Vec<usize>,
}

impl ChunkProposal {
    pub fn finalized(&self) -> impl Iterator<Item = &ProposedChunk> {
        self.chunks.iter().filter(|c| !c.carry_over)
    }
}

#[derive(Debug)]
enum ProposalError {
    Structure(String),
    Coverage(String),
}

impl ProposalError {
    fn message(&self) -> String {
        match self {
            ProposalError::Structure(m) => m.clone(),
            ProposalError::Coverage(m) => format!("coverage: {m}"),
        }
    }
}

fn index_list(v: &Value) -> Option<Vec<usize>> {
    v.as_array()?.iter().map(|x| x.as_u64().map(|n| n as usize)).collect()
}

/// Parses and validates a proposal for a window of `window_len` sentences.
/// Indices in the returned proposal are still window-local.
fn parse_proposal(raw: &str, window_len: usize) -> Result<ChunkProposal, ProposalError> {
    use ProposalError::*;
    let block = extract_json_block(raw).ok_or_else(|| Structure("no JSON object found".into()))?;
    let value: Value = serde_json::from_str(block).map_err(|e| Structure(format!("invalid JSON: {e}")))?;
    let entries = value
        .get("chunks")
        .and_then(Value::as_array)
        .ok_or_else(|| Structure("missing `chunks` array".into()))?;

    let mut chunks = Vec::with_capacity(entries.len());
    for (k, e) in entries.iter().enumerate() {
        let indices = e
            .get("sentence_indices")
            .and_then(index_list)
            .ok_or_else(|| Structure(format!("entry {k}: `sentence_indices` must be a list of integers")))?;
        let carry_over = match e.get("carry_over") {
            None | Some(Value::Null) => false,
            Some(Value::Bool(b)) => *b,
            Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
            Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
            Some(_) => return Err(Structure(format!("entry {k}: `carry_over` must be a boolean"))),
        };
        let chunk_id = match e.get("chunk_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => (k + 1).to_string(),
        };
        let rationale = e
            .get("rationale")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        chunks.push(ProposedChunk {
            chunk_id,
            rationale,
            sentence_indices: indices,
            carry_over,
        });
    }

    let last = chunks.len().saturating_sub(1);
    if chunks.iter().enumerate().any(|(k, c)| c.carry_over && k != last) {
        return Err(Coverage("only the final chunk may be carried over".into()));
    }
    // An empty carry-over entry just means "carry the uncovered tail".
    if chunks
        .last()
        .is_some_and(|c| c.carry_over && c.sentence_indices.is_empty())
    {
        chunks.pop();
        return finish_proposal(chunks, window_len, true);
    }
    let tail_carry = chunks.last().is_some_and(|c| c.carry_over);
    finish_proposal(chunks, window_len, tail_carry)
}

fn finish_proposal(
    mut chunks: Vec<ProposedChunk>,
    window_len: usize,
    tail_carry: bool,
) -> Result<ChunkProposal, ProposalError> {
    use ProposalError::Coverage;
    let mut expected = 0usize;
    for (k, c) in chunks.iter().enumerate() {
        if c.sentence_indices.is_empty() {
            return Err(Coverage(format!("entry {k} has no sentences")));
        }
        for &i in &c.sentence_indices {
            if i >= window_len {
                return Err(Coverage(format!(
                    "sentence {i} is outside the window (size {window_len})"
                )));
            }
            if i < expected {
                return Err(Coverage(format!("sentence {i} is assigned twice or out of order")));
            }
            if i > expected {
                return Err(Coverage(format!(
                    "sentence {expected} is missing (chunks must be contiguous and in order)"
                )));
            }
            expected += 1;
        }
    }
    if expected < window_len && !tail_carry {
        return Err(Coverage(format!(
            "sentences {expected}..{} are not assigned",
            window_len - 1
        )));
    }
    let mut carried: Vec<usize> = Vec::new();
    if tail_carry {
        let carry_entry = chunks.last_mut().filter(|c| c.carry_over);
        if let Some(c) = carry_entry {
            carried.extend(&c.sentence_indices);
            carried.extend(expected..window_len);
            c.sentence_indices = carried.clone();
        } else {
            carried.extend(expected..window_len);
        }
    }
    Ok(ChunkProposal { chunks, carried })
}

/// Renders the chunking prompt for a window.
pub fn render_chunking_prompt(sentences: &[Sentence], window: &WindowSlice) -> String {
    let content = window
        .sentence_indices
        .iter()
        .enumerate()
        .map(|(k, &g)| format!("[{k}] {}", sentences[g].text.replace(['\n', '\r'], " ")))
        .collect::<Vec<_>>()
        .join("\n");
    prompts::render(prompts::CHUNKING, &[("chunk_content", &content)])
}

/// Asks the model to group one window's sentences. Returned indices are
/// document-global.
pub fn chunk_window(
    sentences: &[Sentence],
    window: &WindowSlice,
    gateway: &Gateway,
    max_retries: u32,
) -> Result<ChunkProposal, ChunkError> {
    if window.is_empty() {
        return Err(ChunkError::Coverage("empty window".into()));
    }
    let request = ChatRequest::new(Stage::Chunk, render_chunking_prompt(sentences, window));
    let last_kind: RefCell<Option<ProposalError>> = RefCell::new(None);
    let result = gateway.complete_parsed(&request, max_retries, |raw| {
        parse_proposal(raw, window.len()).map_err(|e| {
            let msg = e.message();
            *last_kind.borrow_mut() = Some(e);
            msg
        })
    });
    let local = match result {
        Ok(p) => p,
        Err(GatewayError::Structure { reason, .. })
            if matches!(*last_kind.borrow(), Some(ProposalError::Coverage(_))) =>
        {
            return Err(ChunkError::Coverage(reason))
        }
        Err(e) => return Err(e.into()),
    };
    let to_global = |v: &[usize]| v.iter().map(|&k| window.sentence_indices[k]).collect::<Vec<_>>();
    Ok(ChunkProposal {
        chunks: local
            .chunks
            .iter()
            .map(|c| ProposedChunk {
                sentence_indices: to_global(&c.sentence_indices),
                ..c.clone()
            })
            .collect(),
        carried: to_global(&local.carried),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkerConfig {
    /// Token budget `T` per window.
    pub window_tokens: usize,
    pub structure_retries: u32,
    /// Turn a window the model keeps failing on into a single chunk instead
    /// of aborting the document.
    pub fallback_whole_window: bool,
}

impl Default for ChunkerConfig {
    fn default() -> Self {
        ChunkerConfig {
            window_tokens: 100,
            structure_retries: 2,
            fallback_whole_window: true,
        }
    }
}

/// Result of chunking one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunking {
    pub sentences: Vec<Sentence>,
    pub chunks: Vec<Chunk>,
    /// Number of chunking windows (one model interaction each, retries aside).
    pub windows: usize,
    /// Windows that fell back to a single chunk.
    pub fallbacks: usize,
}

pub fn chunk_document(
    document: &str,
    language: &Language,
    config: &ChunkerConfig,
    gateway: &Gateway,
) -> Result<Chunking, ChunkError> {
    let budget = config.window_tokens.max(1);
    let sentences = segment_sentences(document, language)?;
    let tokenizer = gateway.tokenizer();
    let counts: Vec<usize> = sentences.iter().map(|s| tokenizer.count(&s.text)).collect();

    let mut groups: Vec<(Vec<usize>, String)> = Vec::new();
    let mut carry: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut windows = 0;
    let mut fallbacks = 0;
    loop {
        let window = take_window(&counts, cursor, budget, &carry);
        if window.is_empty() {
            break;
        }
        windows += 1;
        let is_final = window.next_cursor >= sentences.len();
        let proposal = match chunk_window(&sentences, &window, gateway, config.structure_retries) {
            Ok(p) => p,
            Err(e @ (ChunkError::Coverage(_) | ChunkError::Gateway(GatewayError::Structure { .. })))
                if config.fallback_whole_window =>
            {
                tracing::warn!(window = windows, error = %e, "chunking failed; using the whole window as one chunk");
                fallbacks += 1;
                ChunkProposal {
                    chunks: vec![ProposedChunk {
                        chunk_id: String::new(),
                        rationale: "fallback: whole window".into(),
                        sentence_indices: window.sentence_indices.clone(),
                        carry_over: false,
                    }],
                    carried: Vec::new(),
                }
            }
            Err(e) => return Err(e),
        };
        for c in proposal.finalized() {
            groups.push((c.sentence_indices.clone(), c.rationale.clone()));
        }
        let carry_rationale = proposal
            .chunks
            .iter()
            .find(|c| c.carry_over)
            .map(|c| c.rationale.clone())
            .unwrap_or_default();
        carry = proposal.carried;
        cursor = window.next_cursor;
        if is_final && !carry.is_empty() {
            // nothing left to merge with: the carried tail becomes a chunk
            groups.push((std::mem::take(&mut carry), carry_rationale));
        }
    }
    let chunks = assemble_chunks(document, &sentences, groups, tokenizer)?;
    Ok(Chunking {
        sentences,
        chunks,
        windows,
        fallbacks,
    })
}

#[cfg(test)]
mod tests;
