//! Run orchestration: configuration, collections, per-document pipelines,
//! artifact persistence and run comparison.
//!
//! A run writes `<out>/<run-id>/run.json` plus one directory per document
//! holding that document's artifacts. The run id is a content hash of the
//! configuration (minus the output directory), the mock fixture if any, the
//! stage limit and the collection, so repeating a run reproduces the same
//! directory byte for byte.

mod artifacts;
mod collection;
mod compare;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{self, StrategyId};
use crate::chunker::{chunk_document, Chunk};
use crate::cohesion::{evaluate_cohesion, CohesionOutcome, Dimension};
use crate::exec::map_ordered_bounded;
use crate::gateway::{CostLedger, Gateway, Stage};
use crate::graph::{build_graph, enumerate_pairs, DiscourseGraph};
use crate::metrics::{self, cost_report, CostReport, ExternalScores, MetricsReport};
use crate::translator::{translate_document, TranslatedDocument};

pub use crate::graph::export_dot as export_graph_dot;
pub use artifacts::{
    load_run, read_chunks, read_cohesion, read_graph, read_json, read_jsonl, read_metrics, read_translations, to_json,
    to_jsonl, verify_artifacts, CHUNKS, COHESION, GRAPH, GRAPH_DOT, METRICS, OUTPUT, TRANSLATIONS,
};
pub use collection::{collection_hash, load_collection, DocumentRecord, MANIFEST_NAME};
pub use compare::{compare_runs, ComparisonReport, DocumentComparison, MetricRow};
pub use config::{BackendSpec, LiveConfig, RunConfig};

pub const RUN_MANIFEST: &str = "run.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("collection manifest: {0}")]
    Manifest(String),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("runs cover different collections ({a} vs {b})")]
    CollectionMismatch { a: String, b: String },
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// How far the pipeline goes for each document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageLimit {
    /// Chunking only.
    Chunk,
    /// Chunking and the discourse graph.
    Graph,
    /// The full strategy, including metrics.
    #[default]
    Translate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentStatus {
    Ok,
    Failed,
}

/// Per-document entry of the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub id: String,
    pub status: DocumentStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Artifact paths relative to the run directory.
    pub artifacts: Vec<String>,
    /// Accounting of the strategy itself (judge calls excluded).
    pub ledger: CostLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_ledger: Option<CostLedger>,
    pub chunks: usize,
    pub chunking_windows: usize,
    pub chunking_fallbacks: usize,
    /// Candidate pairs |P| when a graph was built.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_pairs: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_chunks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
}

/// Means over the documents that have a value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeans {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_bleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminology_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external_scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub strategy: StrategyId,
    pub limit: StageLimit,
    pub config: RunConfig,
    pub collection_hash: String,
    pub documents: Vec<DocumentSummary>,
    /// Sum of the per-document strategy ledgers.
    pub ledger: CostLedger,
    pub cost_report: CostReport,
    pub means: RunMeans,
}

impl RunManifest {
    pub fn failed_documents(&self) -> Vec<&str> {
        self.documents
            .iter()
            .filter(|d| d.status == DocumentStatus::Failed)
            .map(|d| d.id.as_str())
            .collect()
    }
}

/// Result of a run: its directory and manifest.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunArtifacts {
    pub fn has_failures(&self) -> bool {
        !self.manifest.failed_documents().is_empty()
    }

    pub fn document_dir(&self, id: &str) -> PathBuf {
        self.dir.join(id)
    }
}

/// Content-addressed run id (16 hex digits).
pub fn run_id(config: &RunConfig, limit: StageLimit, collection_hash: &str) -> Result<String, RunError> {
    let mut hashed = config.clone();
    hashed.out_dir = PathBuf::new();
    let mut h = Sha256::new();
    h.update(hashed.to_toml().as_bytes());
    h.update([0]);
    if let BackendSpec::Mock(path) = &config.backend {
        h.update(std::fs::read(path).map_err(|e| RunError::io(path, e))?);
    }
    h.update([0]);
    h.update(format!("{limit:?}").as_bytes());
    h.update([0]);
    h.update(collection_hash.as_bytes());
    Ok(hex::encode(h.finalize())[..16].to_string())
}

/// Runs the configured strategy over a collection.
pub fn run_pipeline(config: &RunConfig, collection: &[DocumentRecord]) -> Result<RunArtifacts, RunError> {
    run_stages(config, collection, StageLimit::Translate)
}

/// Runs the pipeline up to `limit` with a gateway built from the config.
pub fn run_stages(
    config: &RunConfig,
    collection: &[DocumentRecord],
    limit: StageLimit,
) -> Result<RunArtifacts, RunError> {
    let gateway = config.gateway()?;
    run_with_gateway(config, collection, limit, &gateway)
}

/// Runs the pipeline with a caller-supplied gateway; each document gets a
/// fork of it so ledgers stay per document.
pub fn run_with_gateway(
    config: &RunConfig,
    collection: &[DocumentRecord],
    limit: StageLimit,
    gateway: &Gateway,
) -> Result<RunArtifacts, RunError> {
    config.validate()?;
    if collection.is_empty() {
        return Err(RunError::Manifest("collection has no documents".into()));
    }
    let hash = collection_hash(collection);
    let id = run_id(config, limit, &hash)?;
    let dir = config.out_dir.join(&id);
    if dir.join(RUN_MANIFEST).exists() {
        tracing::info!(run = %id, "run directory exists; artifacts will be rewritten");
    }
    std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;

    let external = match (&config.external_scores, limit) {
        (Some(path), StageLimit::Translate) => {
            let ids: Vec<String> = collection.iter().map(|d| d.id.clone()).collect();
            match metrics::ingest_external_scores(path, &ids) {
                Ok(s) => Some(s),
                Err(e) => {
                    tracing::warn!(error = %e, "external scores skipped");
                    None
                }
            }
        }
        _ => None,
    };

    let results = map_ordered_bounded(collection, gateway.exec(), config.max_concurrent_documents, |doc| {
        run_document(doc, config, limit, &gateway.fork(), external.as_ref(), &dir)
    });
    let documents = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let ledger = CostLedger::merged(documents.iter().map(|d| &d.ledger));
    let processed = documents.len();
    let manifest = RunManifest {
        run_id: id,
        strategy: config.strategy,
        limit,
        config: config.clone(),
        collection_hash: hash,
        cost_report: cost_report(&ledger, processed),
        means: run_means(&documents, external.as_ref()),
        ledger,
        documents,
    };
    artifacts::write_file(&dir.join(RUN_MANIFEST), to_json(&manifest).as_bytes())?;
    Ok(RunArtifacts { dir, manifest })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn run_means(documents: &[DocumentSummary], external: Option<&ExternalScores>) -> RunMeans {
    let reports: Vec<&MetricsReport> = documents.iter().filter_map(|d| d.metrics.as_ref()).collect();
    RunMeans {
        d_bleu: mean(reports.iter().filter_map(|m| m.d_bleu)),
        terminology_accuracy: mean(reports.iter().filter_map(|m| m.terminology_accuracy)),
        external_scores: external.map(ExternalScores::means).unwrap_or_default(),
    }
}

/// Writes one document's artifacts, confined to its own directory.
struct DocWriter<'a> {
    run_dir: &'a Path,
    id: &'a str,
    written: Vec<String>,
}

impl DocWriter<'_> {
    fn put(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let rel = format!("{}/{name}", self.id);
        artifacts::write_file(&self.run_dir.join(&rel), contents.as_bytes())?;
        self.written.push(rel);
        Ok(())
    }
}

/// Chunks for the strategy, plus (windows, fallbacks) of LLM chunking.
fn strategy_chunks(
    doc: &DocumentRecord,
    config: &RunConfig,
    gateway: &Gateway,
) -> Result<(Vec<Chunk>, usize, usize), String> {
    let tokenizer = gateway.tokenizer();
    let err = |e: &dyn std::fmt::Display| e.to_string();
    match config.strategy {
        StrategyId::SentMt => baselines::sentence_chunks(&doc.source_text, &config.src_lang, tokenizer)
            .map(|c| (c, 0, 0))
            .map_err(|e| err(&e)),
        StrategyId::OnePass => {
            if doc.source_text.trim().is_empty() {
                return Err("document is empty".into());
            }
            Ok((
                vec![Chunk {
                    id: 1,
                    sentence_indices: Vec::new(),
                    text: doc.source_text.clone(),
                    token_count: tokenizer.count(&doc.source_text),
                    rationale: String::new(),
                }],
                0,
                0,
            ))
        }
        StrategyId::FixedChunking => {
            baselines::fixed_size_chunks(&doc.source_text, &config.src_lang, config.fixed_chunks, tokenizer)
                .map(|c| (c, 0, 0))
                .map_err(|e| err(&e))
        }
        StrategyId::Transgraph | StrategyId::NoRel | StrategyId::SeqContext => {
            chunk_document(&doc.source_text, &config.src_lang, &config.chunker(), gateway)
                .map(|c| (c.chunks, c.windows, c.fallbacks))
                .map_err(|e| err(&e))
        }
    }
}

fn wants_graph(config: &RunConfig, limit: StageLimit) -> bool {
    match limit {
        StageLimit::Chunk => false,
        StageLimit::Graph => true,
        StageLimit::Translate => match config.strategy {
            StrategyId::Transgraph | StrategyId::FixedChunking => true,
            StrategyId::SeqContext => config.seq_labels,
            StrategyId::SentMt | StrategyId::OnePass | StrategyId::NoRel => false,
        },
    }
}

fn translate(
    doc: &DocumentRecord,
    chunks: &[Chunk],
    graph: Option<&DiscourseGraph>,
    config: &RunConfig,
    gateway: &Gateway,
) -> Result<TranslatedDocument, String> {
    let tcfg = config.translator();
    match config.strategy {
        StrategyId::SentMt => baselines::translate_sentence_level(&doc.source_text, &tcfg, gateway)
            .map(|(_, t)| t)
            .map_err(|e| e.to_string()),
        StrategyId::OnePass => {
            baselines::translate_single_pass(&doc.source_text, &tcfg, gateway).map_err(|e| e.to_string())
        }
        StrategyId::Transgraph | StrategyId::FixedChunking => {
            let graph = graph.expect("graph strategies build a graph");
            translate_document(chunks, graph, &tcfg, gateway).map_err(|e| e.to_string())
        }
        StrategyId::NoRel => {
            baselines::translate_sequential(chunks, config.seq_window, None, &tcfg, gateway).map_err(|e| e.to_string())
        }
        StrategyId::SeqContext => {
            baselines::translate_sequential(chunks, config.seq_window, graph, &tcfg, gateway).map_err(|e| e.to_string())
        }
    }
}

fn document_metrics(
    doc: &DocumentRecord,
    output: &str,
    ledger: &CostLedger,
    config: &RunConfig,
    tokenizer: crate::gateway::Tokenizer,
    external: Option<&ExternalScores>,
) -> MetricsReport {
    let d_bleu = doc.reference_text.as_deref().and_then(|r| {
        metrics::d_bleu(output, r, config.bleu_max_n, tokenizer)
            .map_err(|e| tracing::warn!(document = %doc.id, error = %e, "d-BLEU skipped"))
            .ok()
    });
    let terminology_accuracy = (!doc.terms.is_empty())
        .then(|| metrics::terminology_accuracy(output, &doc.terms))
        .and_then(|r| {
            r.map_err(|e| tracing::warn!(document = %doc.id, error = %e, "terminology accuracy skipped"))
                .ok()
        });
    MetricsReport {
        bleu_smoothing: d_bleu.map(|_| metrics::SMOOTHING.to_string()),
        d_bleu,
        terminology_accuracy,
        external_scores: external.map(|s| s.for_document(&doc.id)).unwrap_or_default(),
        cost: ledger.clone(),
        cost_report: cost_report(ledger, 1),
    }
}

fn run_document(
    doc: &DocumentRecord,
    config: &RunConfig,
    limit: StageLimit,
    gateway: &Gateway,
    external: Option<&ExternalScores>,
    run_dir: &Path,
) -> Result<DocumentSummary, RunError> {
    let doc_dir = run_dir.join(&doc.id);
    if doc_dir.exists() {
        std::fs::remove_dir_all(&doc_dir).map_err(|e| RunError::io(&doc_dir, e))?;
    }
    std::fs::create_dir_all(&doc_dir).map_err(|e| RunError::io(&doc_dir, e))?;
    let mut out = DocWriter {
        run_dir,
        id: &doc.id,
        written: Vec::new(),
    };
    let mut summary = DocumentSummary {
        id: doc.id.clone(),
        status: DocumentStatus::Ok,
        error: None,
        artifacts: Vec::new(),
        ledger: CostLedger::default(),
        judge_ledger: None,
        chunks: 0,
        chunking_windows: 0,
        chunking_fallbacks: 0,
        pairs: None,
        edges: None,
        failed_pairs: Vec::new(),
        failed_chunks: Vec::new(),
        metrics: None,
    };
    let fail = |mut summary: DocumentSummary, out: DocWriter, gateway: &Gateway, error: String| {
        tracing::error!(document = %summary.id, %error, "document failed");
        summary.status = DocumentStatus::Failed;
        summary.error = Some(error);
        summary.ledger = gateway.ledger();
        summary.artifacts = out.written;
        Ok(summary)
    };

    let chunks = match strategy_chunks(doc, config, gateway) {
        Ok((chunks, windows, fallbacks)) => {
            summary.chunks = chunks.len();
            summary.chunking_windows = windows;
            summary.chunking_fallbacks = fallbacks;
            chunks
        }
        Err(e) => return fail(summary, out, gateway, e),
    };
    out.put(CHUNKS, &to_jsonl(&chunks))?;

    let graph = wants_graph(config, limit).then(|| {
        let graph = build_graph(&chunks, config.pair_window, gateway, config.structure_retries);
        summary.pairs = Some(enumerate_pairs(chunks.len(), config.pair_window).len());
        summary.edges = Some(graph.edges.len());
        summary.failed_pairs = graph.failed_pairs.clone();
        graph
    });
    if let Some(g) = &graph {
        out.put(GRAPH, &to_json(g))?;
        out.put(GRAPH_DOT, &export_graph_dot(g))?;
    }
    if limit != StageLimit::Translate {
        summary.ledger = gateway.ledger();
        summary.artifacts = out.written;
        return Ok(summary);
    }

    let translated = match translate(doc, &chunks, graph.as_ref(), config, gateway) {
        Ok(t) => t,
        Err(e) => return fail(summary, out, gateway, e),
    };
    out.put(TRANSLATIONS, &to_jsonl(&translated.chunks))?;
    out.put(OUTPUT, &translated.output)?;
    summary.failed_chunks = translated.failed.clone();

    let ledger = gateway.ledger();
    let report = document_metrics(doc, &translated.output, &ledger, config, gateway.tokenizer(), external);
    out.put(METRICS, &to_json(&report))?;

    if config.cohesion {
        let judge = gateway.fork();
        let outcomes: Vec<CohesionOutcome> = Dimension::ALL
            .into_iter()
            .filter_map(|dim| {
                evaluate_cohesion(
                    &doc.source_text,
                    &translated.output,
                    dim,
                    &judge,
                    config.structure_retries,
                )
                .map_err(
                    |e| tracing::warn!(document = %doc.id, dimension = dim.as_str(), error = %e, "cohesion skipped"),
                )
                .ok()
            })
            .collect();
        out.put(COHESION, &to_json(&outcomes))?;
        let judge_ledger = judge.ledger();
        debug_assert_eq!(judge_ledger.calls, judge_ledger.stage(Stage::Judge).calls);
        summary.judge_ledger = Some(judge_ledger);
    }

    summary.ledger = ledger;
    summary.metrics = Some(report);
    summary.artifacts = out.written;
    Ok(summary)
}

#[cfg(test)]
mod tests;
