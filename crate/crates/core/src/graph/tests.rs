use std::sync::Arc;

use super::*;
use crate::gateway::{RetryPolicy, ScriptedBackend};

fn chunk(id: usize, text: &str) -> Chunk {
    Chunk {
        id,
        sentence_indices: vec![id - 1],
        text: text.to_string(),
        token_count: 0,
        rationale: String::new(),
    }
}

fn chunks(n: usize) -> Vec<Chunk> {
    (1..=n).map(|i| chunk(i, &format!("Chunk body {i}."))).collect()
}

fn scripted(jsonl: &str) -> Gateway {
    Gateway::new(Arc::new(ScriptedBackend::parse_jsonl(jsonl).unwrap())).with_retry(RetryPolicy::immediate())
}

fn reply(relation: &str, direction: &str) -> String {
    let body = serde_json::json!({"reason": "r", "relation": relation, "direction": direction}).to_string();
    serde_json::json!({"match": {"tag": "relation"}, "response": body}).to_string()
}

fn edge(src: usize, dst: usize, label: RelationLabel) -> Edge {
    Edge {
        src,
        dst,
        label,
        direction: Direction::Forward,
        reason: String::new(),
    }
}

fn graph(n: usize, edges: Vec<Edge>) -> DiscourseGraph {
    DiscourseGraph {
        edges,
        ..DiscourseGraph::empty(n, DEFAULT_WINDOW)
    }
}

#[test]
fn pairs_match_formula_examples() {
    assert_eq!(enumerate_pairs(4, 2), vec![(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]);
    assert_eq!(enumerate_pairs(3, 10), vec![(1, 2), (1, 3), (2, 3)]);
    assert!(enumerate_pairs(1, 5).is_empty());
    assert!(enumerate_pairs(0, 5).is_empty());
}

#[test]
fn pair_count_formula() {
    for n in 0usize..30 {
        for w in 1..12 {
            let expected: usize = (1..=w).map(|d| n.saturating_sub(d)).sum();
            assert_eq!(enumerate_pairs(n, w).len(), expected);
        }
    }
}

#[test]
fn label_spellings_normalise() {
    use RelationLabel::*;
    let cases = [
        ("Motivation->Method", ProblemSolution),
        ("Problem->Solution", ProblemSolution),
        ("Motivation->Method or Problem->Solution", ProblemSolution),
        ("Cause → Effect", CauseEffect),
        ("**Core->Detail**", CoreDetail),
        ("Entity Coreference", EntityCoreference),
        ("TERMINOLOGY_DEFINITION", TerminologyDefinition),
        ("background-core", BackgroundCore),
    ];
    for (raw, want) in cases {
        assert_eq!(RelationLabel::normalize(raw).unwrap(), Some(want), "{raw}");
    }
    for l in RelationLabel::ALL {
        assert_eq!(RelationLabel::normalize(l.as_str()).unwrap(), Some(l));
    }
    assert_eq!(RelationLabel::normalize("none").unwrap(), None);
    assert!(matches!(
        RelationLabel::normalize("Elaboration"),
        Err(GraphError::UnknownLabel(_))
    ));
}

#[test]
fn symmetric_labels() {
    let sym: Vec<_> = RelationLabel::ALL.into_iter().filter(|l| l.is_symmetric()).collect();
    assert_eq!(
        sym,
        vec![
            RelationLabel::Contrast,
            RelationLabel::Comparison,
            RelationLabel::EntityCoreference
        ]
    );
}

#[test]
fn label_pair_direct_parse() {
    let body = r#"{"reason":"both mention FeSTE","relation":"entity_coreference","direction":"forward"}"#;
    let gw = scripted(&serde_json::json!({"match": {"tag": "relation"}, "response": body}).to_string());
    let c = chunks(2);
    let j = label_pair(&c[0], &c[1], &gw, 2).unwrap();
    assert_eq!(j.relation, Some(RelationLabel::EntityCoreference));
    assert_eq!(j.reason, "both mention FeSTE");
    assert_eq!(j.direction, Direction::Forward);
}

#[test]
fn label_pair_none_and_alias() {
    let c = chunks(2);
    let gw = scripted(&reply("none", "forward"));
    let j = label_pair(&c[0], &c[1], &gw, 2).unwrap();
    assert_eq!(j, RelationJudgment::no_relation());

    let gw = scripted(&reply("Motivation->Method", "forward"));
    let j = label_pair(&c[0], &c[1], &gw, 2).unwrap();
    assert_eq!(j.relation, Some(RelationLabel::ProblemSolution));
}

#[test]
fn unknown_label_gets_one_repair_then_no_relation() {
    let c = chunks(2);
    let gw = scripted(&reply("Elaboration", "forward"));
    let j = label_pair(&c[0], &c[1], &gw, 2).unwrap();
    assert_eq!(j.relation, None);
    assert_eq!(gw.ledger().calls, 2);

    let fixture = [
        r#"{"match":{"tag":"relation","ordinal":0},"response":"{\"reason\":\"x\",\"relation\":\"Elaboration\",\"direction\":\"forward\"}"}"#,
        r#"{"match":{"tag":"relation","ordinal":1},"response":"{\"reason\":\"x\",\"relation\":\"Core->Detail\",\"direction\":\"forward\"}"}"#,
    ]
    .join("\n");
    let gw = scripted(&fixture);
    let j = label_pair(&c[0], &c[1], &gw, 2).unwrap();
    assert_eq!(j.relation, Some(RelationLabel::CoreDetail));
}

#[test]
fn malformed_judgment_exhausts_retries() {
    let c = chunks(2);
    let gw = scripted(r#"{"match":{"tag":"relation"},"response":"They are related."}"#);
    let err = label_pair(&c[0], &c[1], &gw, 2).unwrap_err();
    assert!(matches!(
        err,
        GraphError::Gateway(GatewayError::Structure { attempts: 3, .. })
    ));
}

#[test]
fn relation_prompt_carries_both_chunks() {
    let c = [chunk(2, "  Earlier text.\n"), chunk(5, "Later text. ")];
    let p = render_relation_prompt(&c[0], &c[1]);
    assert!(p.starts_with("You are a text relation analyzer."));
    assert!(p.contains("# Chunk 2:\nEarlier text.\n# Chunk 5:\nLater text.\n"));
    assert!(p.contains("**Chunk 2** and **Chunk 5**"));
}

#[test]
fn direction_resolution() {
    let judged = |label, direction| RelationJudgment {
        reason: "r".into(),
        relation: Some(label),
        direction,
    };
    let e = resolve_direction(&judged(RelationLabel::CauseEffect, Direction::Forward), 2, 5).unwrap();
    assert_eq!((e.src, e.dst), (2, 5));
    let e = resolve_direction(&judged(RelationLabel::TerminologyDefinition, Direction::Backward), 2, 5).unwrap();
    assert_eq!((e.src, e.dst), (5, 2));
    assert!(resolve_direction(&RelationJudgment::no_relation(), 1, 3).is_none());
}

#[test]
fn build_graph_examples() {
    let gw = scripted(&reply("none", "forward"));
    let g = build_graph(&chunks(2), 10, &gw, 2);
    assert!(g.edges.is_empty());
    assert_eq!(g.n_chunks, 2);

    let gw = scripted(&reply("Cause->Effect", "forward"));
    let g = build_graph(&chunks(3), 2, &gw, 2);
    assert_eq!(g.edges.len(), 3);
    assert_eq!(gw.ledger().stage(Stage::Relation).calls, 3);
    let pairs: Vec<_> = g.edges.iter().map(Edge::pair).collect();
    assert_eq!(pairs, vec![(1, 2), (1, 3), (2, 3)]);
    g.validate().unwrap();
}

#[test]
fn failed_pairs_are_recorded() {
    let gw = scripted(r#"{"match":{"tag":"relation"},"response":"not json"}"#);
    let g = build_graph(&chunks(3), 10, &gw, 0);
    assert!(g.edges.is_empty());
    assert_eq!(g.failed_pairs, vec![(1, 2), (1, 3), (2, 3)]);
}

#[test]
fn consistency_examples() {
    use RelationLabel::*;
    let a = graph(3, vec![edge(1, 2, CauseEffect), edge(2, 3, Contrast)]);
    let b = graph(3, vec![edge(1, 2, CauseEffect), edge(3, 2, Contrast)]);
    assert_eq!(graph_consistency(&a, &a).unwrap(), 1.0);
    assert_eq!(graph_consistency(&a, &b).unwrap(), 1.0);

    let c = graph(3, vec![edge(1, 3, Condition)]);
    assert_eq!(graph_consistency(&a, &c).unwrap(), 0.0);
    // directed labels keep their orientation
    let d = graph(3, vec![edge(2, 1, CauseEffect), edge(2, 3, Contrast)]);
    assert!((graph_consistency(&a, &d).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(graph_consistency(&graph(3, vec![]), &graph(3, vec![])).unwrap(), 1.0);
    assert!(matches!(
        graph_consistency(&a, &graph(4, vec![])),
        Err(GraphError::ChunkCountMismatch(3, 4))
    ));
}

#[test]
fn validate_rejects_bad_edges() {
    use RelationLabel::*;
    assert!(graph(3, vec![edge(1, 1, Contrast)]).validate().is_err());
    assert!(graph(3, vec![edge(1, 4, Contrast)]).validate().is_err());
    assert!(graph(3, vec![edge(1, 2, Contrast), edge(2, 1, Condition)])
        .validate()
        .is_err());
    let mut g = graph(20, vec![edge(1, 15, Contrast)]);
    g.window = 10;
    assert!(g.validate().is_err());
}

#[test]
fn json_schema_round_trip() {
    let g = graph(2, vec![edge(1, 2, RelationLabel::TerminologyDefinition)]);
    let text = serde_json::to_string(&g).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["edges"][0]["label"], "terminology_definition");
    assert_eq!(v["edges"][0]["direction"], "forward");
    assert!(v.get("failed_pairs").is_none());
    assert_eq!(serde_json::from_str::<DiscourseGraph>(&text).unwrap(), g);
}

#[test]
fn dot_export() {
    let g = graph(2, vec![]);
    let dot = export_dot(&g);
    assert_eq!(dot.matches("label=\"Chunk").count(), 2);
    assert!(!dot.contains("->"));

    let g = graph(2, vec![edge(1, 2, RelationLabel::CauseEffect)]);
    let dot = export_dot(&g);
    assert_eq!(dot.matches("->").count(), 1);
    assert!(dot.contains("1 -> 2 [label=\"cause_effect\"];"));
}

#[test]
fn accuracy_against_gold() {
    use RelationLabel::*;
    let g = graph(3, vec![edge(1, 2, CauseEffect), edge(3, 2, Contrast)]);
    let gold = vec![
        GoldRelation {
            i: 1,
            j: 2,
            relation: Some(CauseEffect),
        },
        GoldRelation {
            i: 2,
            j: 3,
            relation: Some(Comparison),
        },
        GoldRelation {
            i: 1,
            j: 3,
            relation: None,
        },
    ];
    assert!((relation_accuracy(&g, &gold).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(relation_accuracy(&g, &[]), None);
}
