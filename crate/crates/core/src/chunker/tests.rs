use std::sync::Arc;

use super::*;
use crate::gateway::{RetryPolicy, ScriptedBackend, SyntheticBackend};

fn scripted(jsonl: &str) -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::parse_jsonl(jsonl).unwrap())).with_retry(RetryPolicy::immediate())
}

fn proposal_line(ordinal: Option<usize>, groups: &[(&[usize], bool)]) -> String {
    let chunks: Vec<_> = groups
        .iter()
        .enumerate()
        .map(|(k, (idx, carry))| {
            serde_json::json!({"chunk_id": k + 1, "rationale": "r", "sentence_indices": idx, "carry_over": carry})
        })
        .collect();
    let response = serde_json::json!({ "chunks": chunks }).to_string();
    let matcher = match ordinal {
        Some(n) => serde_json::json!({"tag": "chunk", "ordinal": n}),
        None => serde_json::json!({"tag": "chunk"}),
    };
    serde_json::json!({"match": matcher, "response": response}).to_string()
}

fn en() -> Language {
    Language::new("en")
}

#[test]
fn window_reaches_budget() {
    let w = take_window(&[40, 40, 40], 0, 100, &[]);
    assert_eq!(w.sentence_indices, vec![0, 1, 2]);
    assert_eq!(w.next_cursor, 3);

    let w = take_window(&[40, 40, 40, 40], 0, 80, &[]);
    assert_eq!(w.sentence_indices, vec![0, 1]);
}

#[test]
fn window_takes_oversized_sentence_alone() {
    let w = take_window(&[500, 3], 0, 100, &[]);
    assert_eq!(w.sentence_indices, vec![0]);
    assert_eq!(w.next_cursor, 1);
}

#[test]
fn window_at_end_is_empty() {
    let w = take_window(&[5, 5], 2, 100, &[]);
    assert!(w.is_empty());
    let w = take_window(&[5, 5, 5], 2, 100, &[1]);
    assert_eq!(w.sentence_indices, vec![1, 2]);
    assert_eq!(w.carried, 1);
}

fn five_sentences() -> (String, Vec<Sentence>) {
    let doc = "S0. S1. S2. S3. S4.".to_string();
    let s = segment_sentences(&doc, &en()).unwrap();
    assert_eq!(s.len(), 5);
    (doc, s)
}

#[test]
fn valid_proposal_accepted() {
    let (_, sentences) = five_sentences();
    let gw = scripted(&proposal_line(None, &[(&[0, 1, 2], false), (&[3, 4], false)]));
    let w = take_window(&[1; 5], 0, 100, &[]);
    let p = chunk_window(&sentences, &w, &gw, 2).unwrap();
    assert_eq!(p.chunks.len(), 2);
    assert_eq!(p.finalized().count(), 2);
    assert!(p.carried.is_empty());
}

#[test]
fn duplicate_sentence_is_coverage_error() {
    let (_, sentences) = five_sentences();
    let gw = scripted(&proposal_line(None, &[(&[0, 1], false), (&[1, 2], false)]));
    let w = take_window(&[1, 1, 1], 0, 100, &[]);
    let err = chunk_window(&sentences[..3], &w, &gw, 2).unwrap_err();
    assert!(matches!(err, ChunkError::Coverage(_)), "{err:?}");
    // the rejected proposal was retried twice
    assert_eq!(gw.ledger().calls, 3);
}

#[test]
fn omitted_and_noncontiguous_are_rejected() {
    let (_, sentences) = five_sentences();
    let w = take_window(&[1, 1, 1], 0, 100, &[]);
    for groups in [
        vec![(&[0usize, 1][..], false)],
        vec![(&[0usize, 2][..], false), (&[1usize][..], false)],
        vec![(&[0usize][..], true), (&[1usize, 2][..], false)],
        vec![(&[0usize, 1, 2, 3][..], false)],
    ] {
        let gw = scripted(&proposal_line(None, &groups));
        assert!(matches!(
            chunk_window(&sentences[..3], &w, &gw, 0),
            Err(ChunkError::Coverage(_))
        ));
    }
}

#[test]
fn carry_over_defers_last_sentence() {
    let (_, sentences) = five_sentences();
    let gw = scripted(&proposal_line(None, &[(&[0, 1], false), (&[2], true)]));
    let w = take_window(&[1, 1, 1], 0, 100, &[]);
    let p = chunk_window(&sentences[..3], &w, &gw, 2).unwrap();
    let done: Vec<_> = p.finalized().map(|c| c.sentence_indices.clone()).collect();
    assert_eq!(done, vec![vec![0, 1]]);
    assert_eq!(p.carried, vec![2]);
}

#[test]
fn carry_flag_with_omitted_tail() {
    let (_, sentences) = five_sentences();
    // model left sentence 2 out entirely and flagged the carry on an empty entry
    let gw = scripted(&proposal_line(None, &[(&[0, 1], false), (&[], true)]));
    let w = take_window(&[1, 1, 1], 0, 100, &[]);
    let p = chunk_window(&sentences[..3], &w, &gw, 0).unwrap();
    assert_eq!(p.carried, vec![2]);
}

#[test]
fn window_local_indices_map_to_global() {
    let (_, sentences) = five_sentences();
    let gw = scripted(&proposal_line(None, &[(&[0, 1], false), (&[2], false)]));
    let w = take_window(&[1; 5], 3, 100, &[2]);
    assert_eq!(w.sentence_indices, vec![2, 3, 4]);
    let p = chunk_window(&sentences, &w, &gw, 0).unwrap();
    assert_eq!(p.chunks[0].sentence_indices, vec![2, 3]);
    assert_eq!(p.chunks[1].sentence_indices, vec![4]);
}

#[test]
fn prompt_lists_numbered_window_sentences() {
    let (_, sentences) = five_sentences();
    let w = take_window(&[1; 5], 3, 100, &[2]);
    let p = render_chunking_prompt(&sentences, &w);
    assert!(p.starts_with("You are a document chunker."));
    assert!(p.contains("[0] S2.\n[1] S3.\n[2] S4."));
    assert!(!p.contains("S1."));
}

#[test]
fn single_window_single_chunk() {
    let doc = "First one. Second one. Third one.";
    let gw = scripted(&proposal_line(None, &[(&[0, 1, 2], false)]));
    let cfg = ChunkerConfig {
        window_tokens: 10_000,
        ..ChunkerConfig::default()
    };
    let out = chunk_document(doc, &en(), &cfg, &gw).unwrap();
    assert_eq!(out.windows, 1);
    assert_eq!(out.chunks.len(), 1);
    assert_eq!(out.chunks[0].id, 1);
    assert_eq!(out.chunks[0].sentence_indices, vec![0, 1, 2]);
    assert_eq!(out.chunks[0].text, doc);
}

#[test]
fn carry_chain_across_windows() {
    // six sentences of four tokens each; T = 12 gives windows of three new sentences
    let doc = "One two three. Four five six. Seven eight nine. Ten eleven twelve. A b c. D e f.";
    let fixture = [
        proposal_line(Some(0), &[(&[0, 1], false), (&[2], true)]),
        proposal_line(Some(1), &[(&[0, 1], false), (&[2, 3], false)]),
    ]
    .join("\n");
    let gw = scripted(&fixture);
    let cfg = ChunkerConfig {
        window_tokens: 12,
        ..ChunkerConfig::default()
    };
    let out = chunk_document(doc, &en(), &cfg, &gw).unwrap();
    let groups: Vec<_> = out.chunks.iter().map(|c| c.sentence_indices.clone()).collect();
    assert_eq!(groups, vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
    assert_eq!(out.windows, 2);
    let joined: String = out.chunks.iter().map(|c| c.text.as_str()).collect();
    assert_eq!(joined, doc);
}

#[test]
fn carry_on_final_window_is_finalised() {
    let doc = "Alpha. Beta. Gamma.";
    let gw = scripted(&proposal_line(None, &[(&[0], false), (&[1, 2], true)]));
    let out = chunk_document(doc, &en(), &ChunkerConfig::default(), &gw).unwrap();
    let groups: Vec<_> = out.chunks.iter().map(|c| c.sentence_indices.clone()).collect();
    assert_eq!(groups, vec![vec![0], vec![1, 2]]);
}

#[test]
fn persistent_failure_falls_back_to_whole_window() {
    let doc = "Alpha. Beta. Gamma.";
    let gw = scripted(r#"{"match":{"tag":"chunk"},"response":"I cannot do that."}"#);
    let out = chunk_document(doc, &en(), &ChunkerConfig::default(), &gw).unwrap();
    assert_eq!(out.fallbacks, 1);
    assert_eq!(out.chunks.len(), 1);

    let strict = ChunkerConfig {
        fallback_whole_window: false,
        ..ChunkerConfig::default()
    };
    let err = chunk_document(doc, &en(), &strict, &gw).unwrap_err();
    assert!(matches!(err, ChunkError::Gateway(GatewayError::Structure { .. })));
}

#[test]
fn reconstruction_with_synthetic_backend() {
    let doc = "  Leading space. Then a sentence!\n\nA new paragraph here. And more?  Final words.\n";
    let gw = Gateway::new(Arc::new(SyntheticBackend {
        carry_percent: 50,
        max_group: 2,
        ..SyntheticBackend::default()
    }));
    let cfg = ChunkerConfig {
        window_tokens: 4,
        ..ChunkerConfig::default()
    };
    let out = chunk_document(doc, &en(), &cfg, &gw).unwrap();
    let joined: String = out.chunks.iter().map(|c| c.text.as_str()).collect();
    assert_eq!(joined, doc);
    let all: Vec<usize> = out.chunks.iter().flat_map(|c| c.sentence_indices.clone()).collect();
    assert_eq!(all, (0..out.sentences.len()).collect::<Vec<_>>());
    assert_eq!(out.chunks[0].leading_whitespace(), "  ");
    assert_eq!(gw.ledger().calls as usize, out.windows);
}
