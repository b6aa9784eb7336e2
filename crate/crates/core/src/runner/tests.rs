use std::path::Path;

use super::*;
use crate::translator::FailurePolicy;

const DOC_A: &str = "The model reads the input. It then writes a summary. The summary is short.\n\nA second paragraph follows. It ends here.";
const DOC_B: &str = "Rain fell all night. The river rose. By morning the bridge was closed.";

fn collection() -> Vec<DocumentRecord> {
    vec![
        DocumentRecord {
            id: "a".into(),
            source_text: DOC_A.into(),
            reference_text: Some("Das Modell liest die Eingabe.".into()),
            terms: vec![crate::metrics::TermPair {
                source_term: "model".into(),
                target_term: "Modell".into(),
            }],
        },
        DocumentRecord {
            id: "b".into(),
            source_text: DOC_B.into(),
            reference_text: None,
            terms: Vec::new(),
        },
    ]
}

fn config(out: &Path, strategy: StrategyId) -> RunConfig {
    RunConfig {
        strategy,
        out_dir: out.to_path_buf(),
        window_tokens: 12,
        ..RunConfig::default()
    }
}

#[test]
fn backend_spec_strings() {
    assert_eq!(
        "mock:f.jsonl".parse::<BackendSpec>().unwrap(),
        BackendSpec::Mock("f.jsonl".into())
    );
    assert_eq!(
        "synthetic".parse::<BackendSpec>().unwrap(),
        BackendSpec::Synthetic { seed: 0 }
    );
    assert_eq!(
        "synthetic:7".parse::<BackendSpec>().unwrap(),
        BackendSpec::Synthetic { seed: 7 }
    );
    assert_eq!("live".parse::<BackendSpec>().unwrap(), BackendSpec::Live);
    assert!("mock:".parse::<BackendSpec>().is_err());
    assert!("gpt".parse::<BackendSpec>().is_err());
    for s in ["mock:x/y.jsonl", "synthetic", "synthetic:3", "live"] {
        assert_eq!(s.parse::<BackendSpec>().unwrap().to_string(), s);
    }
}

#[test]
fn config_defaults_and_toml_round_trip() {
    let c = RunConfig::default();
    assert_eq!((c.window_tokens, c.pair_window, c.context_cap), (100, 10, 5));
    assert_eq!(c.failure, FailurePolicy::Halt);
    let again = RunConfig::from_toml(&c.to_toml()).unwrap();
    assert_eq!(again, c);
    let partial =
        RunConfig::from_toml("strategy = \"seq_context\"\nbackend = \"synthetic:4\"\ncontext_cap = 3\n").unwrap();
    assert_eq!(partial.strategy, StrategyId::SeqContext);
    assert_eq!(partial.backend, BackendSpec::Synthetic { seed: 4 });
    assert_eq!(partial.context_cap, 3);
    assert_eq!(partial.window_tokens, 100);
}

#[test]
fn config_rejects_bad_values() {
    assert!(matches!(
        RunConfig::from_toml("context_cap = 0"),
        Err(RunError::Config(_))
    ));
    assert!(matches!(
        RunConfig::from_toml("unknown_field = 1"),
        Err(RunError::Config(_))
    ));
    assert!(matches!(
        RunConfig::from_toml("backend = \"live\""),
        Err(RunError::Config(_))
    ));
}

#[test]
fn manifest_collection_with_references() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.txt"), "Source x.").unwrap();
    std::fs::write(dir.path().join("x.ref"), "Ziel x.").unwrap();
    std::fs::write(dir.path().join("terms.tsv"), "source\tQuelle\n").unwrap();
    std::fs::write(
        dir.path().join(MANIFEST_NAME),
        r#"{"documents": [
            {"id": "y", "source_text": "Source y.", "reference_text": "Ziel y."},
            {"id": "x", "source": "x.txt", "reference": "x.ref", "terms": "terms.tsv"}
        ]}"#,
    )
    .unwrap();
    let docs = load_collection(dir.path()).unwrap();
    assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["x", "y"]);
    assert!(docs.iter().all(|d| d.reference_text.is_some()));
    assert_eq!(docs[0].terms.len(), 1);
    assert!(docs[1].terms.is_empty());
}

#[test]
fn duplicate_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"documents": [{"id": "d", "source_text": "One."}, {"id": "d", "source_text": "Two."}]}"#,
    )
    .unwrap();
    assert!(matches!(load_collection(&path), Err(RunError::DuplicateId(id)) if id == "d"));
}

#[test]
fn directory_scan_collection() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d2.src.txt"), "Two.").unwrap();
    std::fs::write(dir.path().join("d1.src.txt"), "One.").unwrap();
    std::fs::write(dir.path().join("d1.ref.txt"), "Eins.").unwrap();
    std::fs::write(
        dir.path().join("d1.terms.jsonl"),
        r#"{"source_term":"one","target_term":"eins"}"#,
    )
    .unwrap();
    let docs = load_collection(dir.path()).unwrap();
    assert_eq!(docs.len(), 2);
    assert_eq!(docs[0].id, "d1");
    assert_eq!(docs[0].reference_text.as_deref(), Some("Eins."));
    assert_eq!(docs[0].terms[0].target_term, "eins");
    assert_eq!(docs[1].reference_text, None);
    assert!(matches!(
        load_collection(&dir.path().join("nope")),
        Err(RunError::Manifest(_))
    ));
}

#[test]
fn invalid_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, r#"{"documents": [{"id": "../up", "source_text": "One."}]}"#).unwrap();
    assert!(matches!(load_collection(&path), Err(RunError::Manifest(_))));
}

#[test]
fn run_id_ignores_output_directory() {
    let docs = collection();
    let h = collection_hash(&docs);
    let a = config(Path::new("/tmp/one"), StrategyId::Transgraph);
    let b = config(Path::new("/tmp/two"), StrategyId::Transgraph);
    assert_eq!(
        run_id(&a, StageLimit::Translate, &h).unwrap(),
        run_id(&b, StageLimit::Translate, &h).unwrap()
    );
    let c = config(Path::new("/tmp/one"), StrategyId::NoRel);
    assert_ne!(
        run_id(&a, StageLimit::Translate, &h).unwrap(),
        run_id(&c, StageLimit::Translate, &h).unwrap()
    );
    assert_ne!(
        run_id(&a, StageLimit::Translate, &h).unwrap(),
        run_id(&a, StageLimit::Graph, &h).unwrap()
    );
}

#[test]
fn transgraph_run_writes_artifacts_and_counts_calls() {
    let out = tempfile::tempdir().unwrap();
    let run = run_pipeline(&config(out.path(), StrategyId::Transgraph), &collection()).unwrap();
    assert!(!run.has_failures());
    for doc in &run.manifest.documents {
        let names: Vec<&str> = doc.artifacts.iter().map(|a| a.rsplit('/').next().unwrap()).collect();
        for expected in [CHUNKS, GRAPH, GRAPH_DOT, TRANSLATIONS, OUTPUT, METRICS] {
            assert!(names.contains(&expected), "{} lacks {expected}", doc.id);
        }
        let n = doc.chunks;
        assert_eq!(doc.ledger.stage(Stage::Relation).calls as usize, doc.pairs.unwrap());
        assert_eq!(doc.pairs.unwrap(), enumerate_pairs(n, 10).len());
        assert_eq!(doc.ledger.stage(Stage::Translate).calls as usize, n);
        assert!(doc.ledger.is_consistent());
        let metrics = read_metrics(&run.dir.join(&doc.id).join(METRICS)).unwrap();
        assert_eq!(metrics.cost, doc.ledger);
    }
    let a = &run.manifest.documents[0];
    assert!(a.metrics.as_ref().unwrap().d_bleu.is_some());
    assert!(a.metrics.as_ref().unwrap().terminology_accuracy.is_some());
    let b = &run.manifest.documents[1];
    assert!(b.metrics.as_ref().unwrap().d_bleu.is_none());
    assert!(b.metrics.as_ref().unwrap().terminology_accuracy.is_none());
    verify_artifacts(&run.dir, &run.manifest).unwrap();
    assert_eq!(load_run(&run.dir).unwrap(), run.manifest);
}

#[test]
fn one_pass_makes_one_call_per_document() {
    let out = tempfile::tempdir().unwrap();
    let run = run_pipeline(&config(out.path(), StrategyId::OnePass), &collection()[1..]).unwrap();
    assert_eq!(run.manifest.ledger.calls, 1);
    assert_eq!(run.manifest.documents[0].chunks, 1);
}

#[test]
fn every_strategy_completes() {
    let out = tempfile::tempdir().unwrap();
    for s in StrategyId::ALL {
        let run = run_pipeline(&config(out.path(), s), &collection()).unwrap();
        assert!(!run.has_failures(), "{s}");
        let graph_built = run.manifest.documents[0].pairs.is_some();
        let expect_graph = matches!(
            s,
            StrategyId::Transgraph | StrategyId::FixedChunking | StrategyId::SeqContext
        );
        assert_eq!(graph_built, expect_graph, "{s}");
        if s == StrategyId::NoRel || s == StrategyId::SentMt || s == StrategyId::OnePass {
            assert_eq!(run.manifest.ledger.stage(Stage::Relation).calls, 0);
        }
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (one, two) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_pipeline(&config(one.path(), StrategyId::Transgraph), &collection()).unwrap();
    let mut cfg = config(two.path(), StrategyId::Transgraph);
    cfg.parallel = false;
    let seq = run_pipeline(&cfg, &collection()).unwrap();
    // different config (parallel flag) → different id; compare document artifacts only
    let strip = |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != RUN_MANIFEST).collect::<Vec<_>>();
    assert_eq!(strip(dir_bytes(&a.dir)), strip(dir_bytes(&seq.dir)));
    let again = run_pipeline(&config(one.path(), StrategyId::Transgraph), &collection()).unwrap();
    assert_eq!(again.dir, a.dir);
    assert_eq!(dir_bytes(&again.dir).len(), dir_bytes(&a.dir).len());
}

#[test]
fn stage_limits_stop_early() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config(out.path(), StrategyId::Transgraph);
    let chunked = run_stages(&cfg, &collection(), StageLimit::Chunk).unwrap();
    let doc = &chunked.manifest.documents[0];
    assert_eq!(doc.artifacts, vec![format!("a/{CHUNKS}")]);
    assert_eq!(doc.ledger.calls, doc.ledger.stage(Stage::Chunk).calls);
    let graphed = run_stages(&cfg, &collection(), StageLimit::Graph).unwrap();
    assert_eq!(graphed.manifest.documents[0].artifacts.len(), 3);
    assert_eq!(graphed.manifest.ledger.stage(Stage::Translate).calls, 0);
}

#[test]
fn halted_document_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("f.jsonl");
    // relation labelling answers, translation does not
    std::fs::write(
        &fixture,
        r#"{"match":{"tag":"relation"},"response":"{\"reason\": \"none\", \"relation\": \"none\", \"direction\": \"forward\"}"}"#,
    )
    .unwrap();
    let mut cfg = config(dir.path(), StrategyId::FixedChunking);
    cfg.backend = BackendSpec::Mock(fixture);
    cfg.transport_retries = 0;
    let run = run_pipeline(&cfg, &collection()[1..]).unwrap();
    assert!(run.has_failures());
    let doc = &run.manifest.documents[0];
    assert_eq!(doc.status, DocumentStatus::Failed);
    assert!(doc.error.is_some());
    assert!(doc.artifacts.iter().any(|a| a.ends_with(GRAPH)));

    cfg.failure = FailurePolicy::SkipAndMark;
    let run = run_pipeline(&cfg, &collection()[1..]).unwrap();
    assert!(!run.has_failures());
    assert_eq!(
        run.manifest.documents[0].failed_chunks.len(),
        run.manifest.documents[0].chunks
    );
}

#[test]
fn cohesion_uses_a_separate_ledger() {
    let out = tempfile::tempdir().unwrap();
    let mut cfg = config(out.path(), StrategyId::OnePass);
    cfg.cohesion = true;
    let doc = DocumentRecord {
        id: "b".into(),
        source_text: "Anna met Tom. She greeted him, and they left. But it rained.".into(),
        reference_text: None,
        terms: Vec::new(),
    };
    let run = run_pipeline(&cfg, &[doc]).unwrap();
    let doc = &run.manifest.documents[0];
    assert_eq!(doc.ledger.calls, 1);
    assert_eq!(doc.judge_ledger.as_ref().unwrap().calls, 4);
    let outcomes = read_cohesion(&run.dir.join("b").join(COHESION)).unwrap();
    assert_eq!(outcomes.len(), 2);
}

#[test]
fn compare_identity_and_mismatch() {
    let out = tempfile::tempdir().unwrap();
    let a = run_pipeline(&config(out.path(), StrategyId::Transgraph), &collection()).unwrap();
    let report = compare_runs(&a.manifest, &a.manifest).unwrap();
    assert!(report.rows.iter().all(|r| r.delta.is_none_or(|d| d == 0.0)));
    assert!(report.rows.iter().any(|r| r.metric == "d_bleu" && r.delta == Some(0.0)));
    let other = run_pipeline(&config(out.path(), StrategyId::Transgraph), &collection()[1..]).unwrap();
    assert!(matches!(
        compare_runs(&a.manifest, &other.manifest),
        Err(RunError::CollectionMismatch { .. })
    ));
    assert!(report.render_table().contains("avg_calls"));
}
