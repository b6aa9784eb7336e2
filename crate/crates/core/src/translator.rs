//! Stage-2 translation: each chunk is translated with the source text of its
//! graph in-neighbours (and the relation that links them) as context, and
//! the translations are joined back in chunk order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::Chunk;
use crate::exec::map_ordered;
use crate::gateway::{ChatRequest, Gateway, GatewayError, Stage};
use crate::graph::{DiscourseGraph, Edge, RelationLabel};
use crate::lang::{contains_cjk, Language};
use crate::prompts;

/// Context records per chunk when none is configured.
pub const DEFAULT_CONTEXT_CAP: usize = 5;

/// Marker used for context chunks that are included for adjacency alone.
pub const ADJACENT_CONTEXT: &str = "adjacent_context";

#[derive(Debug, Error)]
#[error("translation of chunk {chunk_id} failed: {source}")]
pub struct TranslationError {
    pub chunk_id: usize,
    #[source]
    pub source: GatewayError,
}

/// Why a context chunk was included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextLabel {
    Relation(RelationLabel),
    /// Preceding chunk with no known relation.
    Adjacent,
    /// Label deliberately withheld from the prompt.
    Unlabeled,
}

impl ContextLabel {
    pub fn as_str(self) -> Option<&'static str> {
        match self {
            ContextLabel::Relation(l) => Some(l.as_str()),
            ContextLabel::Adjacent => Some(ADJACENT_CONTEXT),
            ContextLabel::Unlabeled => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextRecord {
    pub neighbor_id: usize,
    pub neighbor_text: String,
    pub label: ContextLabel,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextPackage {
    pub target_id: usize,
    pub records: Vec<ContextRecord>,
}

impl ContextPackage {
    pub fn empty(target_id: usize) -> Self {
        ContextPackage {
            target_id,
            records: Vec::new(),
        }
    }

    pub fn ids(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.neighbor_id).collect()
    }
}

/// Which in-neighbours survive when there are more than the cap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Closest to the target chunk, smaller id on equal distance.
    #[default]
    Nearest,
    /// Smallest ids.
    Earliest,
}

/// Edges that make `j` a context target, keyed by the neighbour id: every
/// stored edge into `j`, plus symmetric edges from `j` to an earlier chunk.
/// Sorted by neighbour id.
pub fn in_neighbor_edges(graph: &DiscourseGraph, j: usize) -> Vec<(usize, &Edge)> {
    let mut out: Vec<(usize, &Edge)> = graph
        .edges
        .iter()
        .filter_map(|e| {
            if e.dst == j {
                Some((e.src, e))
            } else if e.src == j && e.label.is_symmetric() && e.dst < j {
                Some((e.dst, e))
            } else {
                None
            }
        })
        .collect();
    out.sort_by_key(|(i, _)| *i);
    out.dedup_by_key(|(i, _)| *i);
    out
}

fn record(chunks: &[Chunk], neighbor_id: usize, label: ContextLabel, reason: &str) -> ContextRecord {
    ContextRecord {
        neighbor_id,
        neighbor_text: chunks[neighbor_id - 1].body().to_string(),
        label,
        reason: reason.to_string(),
    }
}

pub fn in_neighbors(graph: &DiscourseGraph, chunks: &[Chunk], j: usize) -> Vec<ContextRecord> {
    in_neighbor_edges(graph, j)
        .into_iter()
        .map(|(i, e)| record(chunks, i, ContextLabel::Relation(e.label), &e.reason))
        .collect()
}

/// Neighbour ids kept under `cap`, in ascending order.
pub fn select_ids(mut ids: Vec<usize>, j: usize, cap: usize, policy: SelectionPolicy) -> Vec<usize> {
    if ids.len() > cap {
        match policy {
            SelectionPolicy::Nearest => ids.sort_by_key(|&i| (i.abs_diff(j), i)),
            SelectionPolicy::Earliest => ids.sort_unstable(),
        }
        ids.truncate(cap);
    }
    ids.sort_unstable();
    ids
}

pub fn select_context(
    graph: &DiscourseGraph,
    chunks: &[Chunk],
    j: usize,
    cap: usize,
    policy: SelectionPolicy,
) -> ContextPackage {
    let all = in_neighbors(graph, chunks, j);
    let keep = select_ids(all.iter().map(|r| r.neighbor_id).collect(), j, cap.max(1), policy);
    ContextPackage {
        target_id: j,
        records: all.into_iter().filter(|r| keep.contains(&r.neighbor_id)).collect(),
    }
}

fn render_related(ctx: &ContextPackage) -> String {
    if ctx.records.is_empty() {
        return prompts::NO_RELATED_CHUNKS.to_string();
    }
    ctx.records
        .iter()
        .map(|r| {
            let mut block = format!("Chunk ID: {}\n", r.neighbor_id);
            if let Some(label) = r.label.as_str() {
                block.push_str(&format!("Relation: {label}\n"));
                if !r.reason.is_empty() {
                    block.push_str(&format!("Reason: {}\n", r.reason));
                }
            }
            block.push_str(&format!("Text: {}", r.neighbor_text));
            block
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub fn render_translation_prompt(chunk: &Chunk, ctx: &ContextPackage, src: &Language, tgt: &Language) -> String {
    let id = chunk.id.to_string();
    let (src, tgt) = (src.display_name(), tgt.display_name());
    prompts::render(
        prompts::TRANSLATION,
        &[
            ("src_lang", &src),
            ("tgt_lang", &tgt),
            ("related_chunks", &render_related(ctx)),
            ("chunk_id", &id),
            ("chunk_text", chunk.body()),
        ],
    )
}

pub fn render_plain_prompt(text: &str, src: &Language, tgt: &Language) -> String {
    let (src, tgt) = (src.display_name(), tgt.display_name());
    prompts::render(
        prompts::PLAIN_TRANSLATION,
        &[("src_lang", &src), ("tgt_lang", &tgt), ("chunk_text", text)],
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRef {
    pub neighbor_id: usize,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatedChunk {
    pub chunk_id: usize,
    pub source_text: String,
    pub target_text: String,
    pub context: Vec<ContextRef>,
    /// Translation failed and `target_text` is the untranslated source.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

pub fn translate_chunk(
    chunk: &Chunk,
    ctx: &ContextPackage,
    src: &Language,
    tgt: &Language,
    gateway: &Gateway,
) -> Result<TranslatedChunk, TranslationError> {
    debug_assert_eq!(ctx.target_id, chunk.id);
    let request = ChatRequest::new(Stage::Translate, render_translation_prompt(chunk, ctx, src, tgt));
    let response = gateway.complete(&request).map_err(|source| TranslationError {
        chunk_id: chunk.id,
        source,
    })?;
    Ok(TranslatedChunk {
        chunk_id: chunk.id,
        source_text: chunk.text.clone(),
        target_text: response.text,
        context: ctx
            .records
            .iter()
            .map(|r| ContextRef {
                neighbor_id: r.neighbor_id,
                label: r.label.as_str().map(str::to_string),
            })
            .collect(),
        failed: false,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// The first failed chunk aborts the document.
    #[default]
    Halt,
    /// Failed chunks keep their source text and are listed in the result.
    SkipAndMark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslatorConfig {
    pub src_lang: Language,
    pub tgt_lang: Language,
    pub cap: usize,
    pub policy: SelectionPolicy,
    pub failure: FailurePolicy,
}

impl TranslatorConfig {
    pub fn new(src_lang: Language, tgt_lang: Language) -> Self {
        TranslatorConfig {
            src_lang,
            tgt_lang,
            cap: DEFAULT_CONTEXT_CAP,
            policy: SelectionPolicy::default(),
            failure: FailurePolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslatedDocument {
    pub chunks: Vec<TranslatedChunk>,
    pub output: String,
    pub failed: Vec<usize>,
}

/// Joins chunk translations in order. The first chunk's leading whitespace
/// is kept; between chunks the source separator is reused when it holds a
/// line break, otherwise a single space (nothing for CJK targets).
pub fn join_translations(pieces: &[TranslatedChunk]) -> String {
    let mut out = String::new();
    if let Some(first) = pieces.first() {
        let src = &first.source_text;
        out.push_str(&src[..src.len() - src.trim_start().len()]);
    }
    for (k, p) in pieces.iter().enumerate() {
        let target = p.target_text.trim();
        out.push_str(target);
        let gap = &p.source_text[p.source_text.trim_end().len()..];
        let last = k + 1 == pieces.len();
        if last || gap.contains('\n') {
            out.push_str(gap);
        } else if contains_cjk(target) {
            // CJK scripts are written without inter-sentence spaces
        } else if gap.is_empty() {
            out.push(' ');
        } else {
            out.push_str(gap);
        }
    }
    out
}

/// Translates every chunk with its prepared context package. Requests are
/// issued according to the gateway's execution mode; results are assembled
/// in chunk order.
pub fn translate_with_contexts(
    chunks: &[Chunk],
    packages: &[ContextPackage],
    config: &TranslatorConfig,
    gateway: &Gateway,
) -> Result<TranslatedDocument, TranslationError> {
    assert_eq!(chunks.len(), packages.len(), "one context package per chunk");
    let indices: Vec<usize> = (0..chunks.len()).collect();
    let results = map_ordered(&indices, gateway.exec(), |&k| {
        translate_chunk(&chunks[k], &packages[k], &config.src_lang, &config.tgt_lang, gateway)
    });
    let mut done = Vec::with_capacity(chunks.len());
    let mut failed = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(t) => done.push(t),
            Err(e) if config.failure == FailurePolicy::SkipAndMark => {
                tracing::warn!(chunk = e.chunk_id, error = %e.source, "chunk left untranslated");
                failed.push(e.chunk_id);
                done.push(TranslatedChunk {
                    chunk_id: chunks[k].id,
                    source_text: chunks[k].text.clone(),
                    target_text: chunks[k].body().to_string(),
                    context: Vec::new(),
                    failed: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TranslatedDocument {
        output: join_translations(&done),
        chunks: done,
        failed,
    })
}

/// Graph-guided translation of a chunked document.
pub fn translate_document(
    chunks: &[Chunk],
    graph: &DiscourseGraph,
    config: &TranslatorConfig,
    gateway: &Gateway,
) -> Result<TranslatedDocument, TranslationError> {
    assert_eq!(chunks.len(), graph.n_chunks, "graph built over a different chunking");
    let packages: Vec<ContextPackage> = chunks
        .iter()
        .map(|c| select_context(graph, chunks, c.id, config.cap, config.policy))
        .collect();
    translate_with_contexts(chunks, &packages, config, gateway)
}
