//! Comparison strategies: sentence-by-sentence, whole-document, fixed-size
//! chunks, and the two context ablations (unlabelled graph-free context and
//! a sliding window of preceding chunks).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chunker::{assemble_chunks, segment_sentences, Chunk, ChunkError};
use crate::gateway::Stage;
use crate::gateway::{ChatRequest, Gateway, GatewayError, Tokenizer};
use crate::graph::DiscourseGraph;
use crate::lang::Language;
use crate::translator::{
    join_translations, render_plain_prompt, translate_with_contexts, ContextLabel, ContextPackage, ContextRecord,
    TranslatedChunk, TranslatedDocument, TranslationError, TranslatorConfig,
};

/// Fixed-size baseline chunk count.
pub const DEFAULT_FIXED_CHUNKS: usize = 10;
/// Preceding chunks used by the sequential-context baselines.
pub const DEFAULT_SEQ_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    /// One request per sentence, no context.
    SentMt,
    /// The whole document in one request.
    OnePass,
    /// Graph-guided chunk translation.
    Transgraph,
    /// Length-balanced chunks with graph-guided translation.
    FixedChunking,
    /// Model chunking, preceding chunks as unlabelled context.
    NoRel,
    /// Model chunking, preceding chunks as context labelled from the graph.
    SeqContext,
}

impl StrategyId {
    pub const ALL: [StrategyId; 6] = [
        StrategyId::SentMt,
        StrategyId::OnePass,
        StrategyId::Transgraph,
        StrategyId::FixedChunking,
        StrategyId::NoRel,
        StrategyId::SeqContext,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::SentMt => "sent_mt",
            StrategyId::OnePass => "one_pass",
            StrategyId::Transgraph => "transgraph",
            StrategyId::FixedChunking => "fixed_chunking",
            StrategyId::NoRel => "no_rel",
            StrategyId::SeqContext => "seq_context",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace('-', "_");
        StrategyId::ALL
            .into_iter()
            .find(|id| id.as_str() == key)
            .ok_or_else(|| {
                let names = StrategyId::ALL.map(StrategyId::as_str).join(", ");
                format!("unknown strategy {s:?} (expected one of {names})")
            })
    }
}

/// Treats every sentence as its own chunk.
pub fn sentence_chunks(document: &str, language: &Language, tokenizer: Tokenizer) -> Result<Vec<Chunk>, ChunkError> {
    let sentences = segment_sentences(document, language)?;
    let groups = (0..sentences.len()).map(|i| (vec![i], String::new())).collect();
    assemble_chunks(document, &sentences, groups, tokenizer)
}

fn plain_translate(
    chunk: &Chunk,
    config: &TranslatorConfig,
    gateway: &Gateway,
) -> Result<TranslatedChunk, TranslationError> {
    let request = ChatRequest::new(
        Stage::Translate,
        render_plain_prompt(chunk.body(), &config.src_lang, &config.tgt_lang),
    );
    let response = gateway.complete(&request).map_err(|source| TranslationError {
        chunk_id: chunk.id,
        source,
    })?;
    Ok(TranslatedChunk {
        chunk_id: chunk.id,
        source_text: chunk.text.clone(),
        target_text: response.text,
        context: Vec::new(),
        failed: false,
    })
}

/// One context-free request per sentence; returns the sentence chunks used.
pub fn translate_sentence_level(
    document: &str,
    config: &TranslatorConfig,
    gateway: &Gateway,
) -> Result<(Vec<Chunk>, TranslatedDocument), BaselineError> {
    let sentences = sentence_chunks(document, &config.src_lang, gateway.tokenizer())?;
    let results = crate::exec::map_ordered(&sentences, gateway.exec(), |c| plain_translate(c, config, gateway));
    let mut chunks = Vec::with_capacity(sentences.len());
    let mut failed = Vec::new();
    for (c, r) in sentences.iter().zip(results) {
        match r {
            Ok(t) => chunks.push(t),
            Err(e) if config.failure == crate::translator::FailurePolicy::SkipAndMark => {
                tracing::warn!(sentence = c.id, error = %e.source, "sentence left untranslated");
                failed.push(c.id);
                chunks.push(TranslatedChunk {
                    chunk_id: c.id,
                    source_text: c.text.clone(),
                    target_text: c.body().to_string(),
                    context: Vec::new(),
                    failed: true,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let output = join_translations(&chunks);
    Ok((sentences, TranslatedDocument { chunks, output, failed }))
}

/// The whole document in a single request.
pub fn translate_single_pass(
    document: &str,
    config: &TranslatorConfig,
    gateway: &Gateway,
) -> Result<TranslatedDocument, BaselineError> {
    if document.trim().is_empty() {
        return Err(ChunkError::EmptyDocument.into());
    }
    let whole = Chunk {
        id: 1,
        sentence_indices: Vec::new(),
        text: document.to_string(),
        token_count: gateway.estimate_tokens(document),
        rationale: String::new(),
    };
    let translated = plain_translate(&whole, config, gateway)?;
    let chunks = vec![translated];
    Ok(TranslatedDocument {
        output: join_translations(&chunks),
        chunks,
        failed: Vec::new(),
    })
}

/// Splits the document into `min(k, S)` chunks of whole sentences with
/// token counts as even as possible: the c-th boundary is the feasible
/// sentence boundary whose token prefix is closest to `c * total / m`
/// (earlier boundary on ties).
pub fn fixed_size_chunks(
    document: &str,
    language: &Language,
    k: usize,
    tokenizer: Tokenizer,
) -> Result<Vec<Chunk>, ChunkError> {
    let sentences = segment_sentences(document, language)?;
    let counts: Vec<usize> = sentences.iter().map(|s| tokenizer.count(&s.text)).collect();
    let groups = balanced_groups(&counts, k);
    let groups = groups.into_iter().map(|g| (g, String::new())).collect();
    assemble_chunks(document, &sentences, groups, tokenizer)
}

/// Contiguous groups of indices for [`fixed_size_chunks`].
pub fn balanced_groups(counts: &[usize], k: usize) -> Vec<Vec<usize>> {
    let s = counts.len();
    let m = k.max(1).min(s);
    if m == 0 {
        return Vec::new();
    }
    let mut prefix = vec![0u128; s + 1];
    for (i, &c) in counts.iter().enumerate() {
        prefix[i + 1] = prefix[i] + c as u128;
    }
    let total = prefix[s];
    let mut bounds = vec![0usize];
    for c in 1..m {
        let lo = bounds[c - 1] + 1;
        let hi = s - (m - c);
        let target = c as u128 * total;
        let best = (lo..=hi)
            .min_by_key(|&b| (m as u128 * prefix[b]).abs_diff(target))
            .expect("non-empty range");
        bounds.push(best);
    }
    bounds.push(s);
    bounds.windows(2).map(|w| (w[0]..w[1]).collect()).collect()
}

/// Context of up to `k` chunks immediately preceding chunk `j`. With a
/// graph, records are labelled with the relation judged on the pair (or
/// the adjacency marker when there is none); without one they are
/// unlabelled.
pub fn sequential_context(j: usize, k: usize, chunks: &[Chunk], graph: Option<&DiscourseGraph>) -> ContextPackage {
    let first = j.saturating_sub(k).max(1);
    let records = (first..j)
        .map(|i| {
            let (label, reason) = match graph {
                None => (ContextLabel::Unlabeled, String::new()),
                Some(g) => match g.edge_between(i, j) {
                    Some(e) => (ContextLabel::Relation(e.label), e.reason.clone()),
                    None => (ContextLabel::Adjacent, String::new()),
                },
            };
            ContextRecord {
                neighbor_id: i,
                neighbor_text: chunks[i - 1].body().to_string(),
                label,
                reason,
            }
        })
        .collect();
    ContextPackage { target_id: j, records }
}

/// Translates with sequential-window context.
pub fn translate_sequential(
    chunks: &[Chunk],
    k: usize,
    graph: Option<&DiscourseGraph>,
    config: &TranslatorConfig,
    gateway: &Gateway,
) -> Result<TranslatedDocument, TranslationError> {
    let packages: Vec<_> = chunks
        .iter()
        .map(|c| sequential_context(c.id, k, chunks, graph))
        .collect();
    translate_with_contexts(chunks, &packages, config, gateway)
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Translation(#[from] TranslationError),
}

impl From<GatewayError> for BaselineError {
    fn from(e: GatewayError) -> Self {
        BaselineError::Chunk(ChunkError::Gateway(e))
    }
}
