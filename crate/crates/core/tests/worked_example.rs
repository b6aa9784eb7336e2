//! End-to-end walk through the graph-guided pipeline with a hand-written
//! backend that records every prompt it sees.

use std::sync::{Arc, Mutex};

use discourse_mt::chunker::{chunk_document, ChunkerConfig};
use discourse_mt::gateway::{Backend, BackendError, BackendReply, ChatRequest, Gateway, Stage};
use discourse_mt::graph::{build_graph, export_dot, Direction, RelationLabel};
use discourse_mt::translator::{translate_document, TranslatorConfig};
use discourse_mt::Language;

const DOCUMENT: &str = "Feature enrichment links table entities to an external knowledge base. \
The linked facts become new columns. \
Each new column is then scored by a small classifier. \
Weak columns are dropped before training.";

/// Chunks sentences {0,1} and {2,3}; relates the two chunks by a term
/// definition; echoes a marker as translation.
struct Recorder {
    prompts: Mutex<Vec<(Stage, String)>>,
}

impl Backend for Recorder {
    fn id(&self) -> &str {
        "recorder"
    }

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        self.prompts
            .lock()
            .unwrap()
            .push((request.tag, request.user_text.clone()));
        let text = match request.tag {
            Stage::Chunk => r#"{"chunks": [
                {"chunk_id": "1", "rationale": "method", "sentence_indices": [0, 1], "carry_over": false},
                {"chunk_id": "2", "rationale": "filtering", "sentence_indices": [2, 3], "carry_over": false}]}"#
                .to_string(),
            Stage::Relation => r#"{"reason": "Chunk 1 introduces the new columns that chunk 2 filters.",
                "relation": "Terminology->Definition", "direction": "forward"}"#
                .to_string(),
            Stage::Translate => format!("<translation {}>", request.user_text.len()),
            Stage::Judge => return Err(BackendError::NoAnswer("no judge here".into())),
        };
        Ok(BackendReply::text(text))
    }
}

#[test]
fn graph_guided_translation_sees_related_chunk() {
    let recorder = Arc::new(Recorder {
        prompts: Mutex::new(Vec::new()),
    });
    let gw = Gateway::new(recorder.clone());
    let lang = Language::new("en");

    let chunking = chunk_document(DOCUMENT, &lang, &ChunkerConfig::default(), &gw).unwrap();
    assert_eq!(chunking.chunks.len(), 2);
    assert_eq!(chunking.windows, 1);
    assert_eq!(chunking.chunks[1].sentence_indices, vec![2, 3]);

    let graph = build_graph(&chunking.chunks, 10, &gw, 2);
    assert_eq!(graph.edges.len(), 1);
    let e = &graph.edges[0];
    assert_eq!(
        (e.src, e.dst, e.label, e.direction),
        (1, 2, RelationLabel::TerminologyDefinition, Direction::Forward)
    );
    assert!(export_dot(&graph).contains("1 -> 2 [label=\"terminology_definition\"]"));

    let cfg = TranslatorConfig::new(lang, Language::new("de"));
    let doc = translate_document(&chunking.chunks, &graph, &cfg, &gw).unwrap();
    assert_eq!(doc.chunks.len(), 2);
    assert!(doc.chunks[0].context.is_empty());
    assert_eq!(doc.chunks[1].context[0].neighbor_id, 1);
    assert_eq!(
        doc.chunks[1].context[0].label.as_deref(),
        Some("terminology_definition")
    );

    let prompts = recorder.prompts.lock().unwrap();
    let translate: Vec<&String> = prompts
        .iter()
        .filter(|(t, _)| *t == Stage::Translate)
        .map(|(_, p)| p)
        .collect();
    assert_eq!(translate.len(), 2);
    let second = translate
        .iter()
        .find(|p| p.contains("Chunk ID: 1\nRelation: terminology_definition"))
        .unwrap();
    assert!(second.contains("Text: Feature enrichment links table entities"));
    assert!(second.contains("Each new column is then scored"));

    let ledger = gw.ledger();
    assert_eq!(ledger.calls, 4);
    assert!(ledger.is_consistent());
    assert!(doc.output.starts_with("<translation "));
}
