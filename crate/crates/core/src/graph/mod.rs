//! Stage-1 graph construction: relation labeling of chunk pairs inside a
//! bounded window, assembled into a directed labeled discourse graph.

mod dot;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chunker::Chunk;
use crate::exec::map_ordered;
use crate::gateway::{extract_json_block, ChatRequest, Gateway, GatewayError, Stage};
use crate::prompts;

pub use dot::export_dot;

/// Window used when none is configured.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown relation label {0:?}")]
    UnknownLabel(String),
    #[error("graphs have different chunk counts ({0} vs {1})")]
    ChunkCountMismatch(usize, usize),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// The ten rhetorical relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationLabel {
    BackgroundCore,
    CoreDetail,
    ProblemSolution,
    CauseEffect,
    Contrast,
    Comparison,
    Condition,
    Evaluation,
    EntityCoreference,
    TerminologyDefinition,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 10] = [
        RelationLabel::BackgroundCore,
        RelationLabel::CoreDetail,
        RelationLabel::ProblemSolution,
        RelationLabel::CauseEffect,
        RelationLabel::Contrast,
        RelationLabel::Comparison,
        RelationLabel::Condition,
        RelationLabel::Evaluation,
        RelationLabel::EntityCoreference,
        RelationLabel::TerminologyDefinition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::BackgroundCore => "background_core",
            RelationLabel::CoreDetail => "core_detail",
            RelationLabel::ProblemSolution => "problem_solution",
            RelationLabel::CauseEffect => "cause_effect",
            RelationLabel::Contrast => "contrast",
            RelationLabel::Comparison => "comparison",
            RelationLabel::Condition => "condition",
            RelationLabel::Evaluation => "evaluation",
            RelationLabel::EntityCoreference => "entity_coreference",
            RelationLabel::TerminologyDefinition => "terminology_definition",
        }
    }

    /// Labels whose orientation carries no meaning.
    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            RelationLabel::Contrast | RelationLabel::Comparison | RelationLabel::EntityCoreference
        )
    }

    /// Maps a model's spelling of a relation to a label. `Ok(None)` is the
    /// explicit "no relation" answer.
    pub fn normalize(raw: &str) -> Result<Option<RelationLabel>, GraphError> {
        let key = normalize_key(raw);
        let label = match key.as_str() {
            "" | "none" | "no_relation" | "no" | "null" | "no_relation_found" => return Ok(None),
            "background_core" => RelationLabel::BackgroundCore,
            "core_detail" => RelationLabel::CoreDetail,
            "problem_solution" | "motivation_method" | "motivation_method_or_problem_solution" => {
                RelationLabel::ProblemSolution
            }
            "cause_effect" => RelationLabel::CauseEffect,
            "contrast" => RelationLabel::Contrast,
            "comparison" => RelationLabel::Comparison,
            "condition" => RelationLabel::Condition,
            "evaluation" => RelationLabel::Evaluation,
            "entity_coreference" => RelationLabel::EntityCoreference,
            "terminology_definition" => RelationLabel::TerminologyDefinition,
            _ => return Err(GraphError::UnknownLabel(raw.to_string())),
        };
        Ok(Some(label))
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// "Cause -> Effect", "cause→effect", "**Core->Detail**", "Entity Coreference"
// all collapse to snake_case.
fn normalize_key(raw: &str) -> String {
    let lowered = raw
        .trim()
        .trim_matches(|c| c == '*' || c == '"' || c == '\'' || c == '`')
        .to_lowercase();
    let replaced = lowered
        .replace("->", "_")
        .replace("=>", "_")
        .replace(['→', '⇒', '/', '-', ' ', '.'], "_");
    replaced
        .split('_')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Earlier chunk `i` towards later chunk `j`.
    Forward,
    Backward,
}

impl Direction {
    pub fn parse(raw: &str) -> Option<Direction> {
        match raw.trim().to_lowercase().as_str() {
            "forward" => Some(Direction::Forward),
            "backward" => Some(Direction::Backward),
            _ => None,
        }
    }
}

pub const NO_RELATION_REASON: &str = "no relation found";

/// A model's answer for one chunk pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationJudgment {
    pub reason: String,
    /// `None` is the "no relation" verdict.
    pub relation: Option<RelationLabel>,
    pub direction: Direction,
}

impl RelationJudgment {
    pub fn no_relation() -> Self {
        RelationJudgment {
            reason: NO_RELATION_REASON.to_string(),
            relation: None,
            direction: Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub label: RelationLabel,
    pub direction: Direction,
    #[serde(default)]
    pub reason: String,
}

impl Edge {
    /// The pair `(i, j)` with `i < j` this edge was judged on.
    pub fn pair(&self) -> (usize, usize) {
        (self.src.min(self.dst), self.src.max(self.dst))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscourseGraph {
    pub n_chunks: usize,
    pub window: usize,
    pub edges: Vec<Edge>,
    /// Pairs whose judgment could not be obtained; they contribute no edge.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_pairs: Vec<(usize, usize)>,
}

impl DiscourseGraph {
    pub fn empty(n_chunks: usize, window: usize) -> Self {
        DiscourseGraph {
            n_chunks,
            window,
            edges: Vec::new(),
            failed_pairs: Vec::new(),
        }
    }

    /// Checks endpoint range, locality, and uniqueness of judged pairs.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut seen = HashSet::new();
        for e in &self.edges {
            if e.src == e.dst {
                return Err(GraphError::Invalid(format!("self-loop on {}", e.src)));
            }
            for v in [e.src, e.dst] {
                if v == 0 || v > self.n_chunks {
                    return Err(GraphError::Invalid(format!(
                        "endpoint {v} outside 1..={}",
                        self.n_chunks
                    )));
                }
            }
            if e.src.abs_diff(e.dst) > self.window {
                return Err(GraphError::Invalid(format!(
                    "edge {}->{} exceeds window {}",
                    e.src, e.dst, self.window
                )));
            }
            if !seen.insert(e.pair()) {
                return Err(GraphError::Invalid(format!("duplicate edge for pair {:?}", e.pair())));
            }
        }
        Ok(())
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&Edge> {
        let key = (a.min(b), a.max(b));
        self.edges.iter().find(|e| e.pair() == key)
    }
}

/// All pairs `(i, j)` with `1 <= i < j <= n` and `j - i <= w`, in
/// lexicographic order.
pub fn enumerate_pairs(n: usize, w: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 1..=n {
        for j in (i + 1)..=(i + w).min(n) {
            pairs.push((i, j));
        }
    }
    pairs
}

pub fn render_relation_prompt(ci: &Chunk, cj: &Chunk) -> String {
    let (i, j) = (ci.id.to_string(), cj.id.to_string());
    prompts::render(
        prompts::RELATION,
        &[("i", &i), ("j", &j), ("chunk_i", ci.body()), ("chunk_j", cj.body())],
    )
}

enum Parsed {
    Known(RelationJudgment),
    Unknown(String),
}

fn parse_judgment(raw: &str) -> Result<Parsed, String> {
    let block = extract_json_block(raw).ok_or("no JSON object found")?;
    let value: Value = serde_json::from_str(block).map_err(|e| format!("invalid JSON: {e}"))?;
    let field = |k: &str| -> Result<&str, String> {
        value
            .get(k)
            .and_then(Value::as_str)
            .ok_or_else(|| format!("missing string field {k:?}"))
    };
    let reason = field("reason")?;
    let relation = field("relation")?;
    let label = match RelationLabel::normalize(relation) {
        Ok(l) => l,
        Err(_) => return Ok(Parsed::Unknown(relation.to_string())),
    };
    let Some(label) = label else {
        return Ok(Parsed::Known(RelationJudgment::no_relation()));
    };
    let direction = Direction::parse(field("direction")?)
        .ok_or_else(|| "direction must be \"forward\" or \"backward\"".to_string())?;
    Ok(Parsed::Known(RelationJudgment {
        reason: reason.trim().to_string(),
        relation: Some(label),
        direction,
    }))
}

fn label_repair(original: &str, unknown: &str) -> String {
    let allowed = RelationLabel::ALL.map(RelationLabel::as_str).join(", ");
    format!(
        "{original}\n\nThe relation {unknown:?} is not one of the allowed categories. \
         Answer again using exactly one of: {allowed}, or none."
    )
}

/// Asks the model for the relation between earlier chunk `ci` and later
/// chunk `cj`. A label outside the schema gets one repair request; if that
/// still fails the pair is treated as unrelated.
pub fn label_pair(ci: &Chunk, cj: &Chunk, gateway: &Gateway, max_retries: u32) -> Result<RelationJudgment, GraphError> {
    let prompt = render_relation_prompt(ci, cj);
    let request = ChatRequest::new(Stage::Relation, prompt.clone());
    let unknown = match gateway.complete_parsed(&request, max_retries, parse_judgment)? {
        Parsed::Known(j) => return Ok(j),
        Parsed::Unknown(label) => label,
    };
    let repair = ChatRequest::new(Stage::Relation, label_repair(&prompt, &unknown));
    match gateway.complete_parsed(&repair, max_retries, parse_judgment)? {
        Parsed::Known(j) => Ok(j),
        Parsed::Unknown(label) => {
            tracing::warn!(i = ci.id, j = cj.id, %label, "unmappable relation label; treating pair as unrelated");
            Ok(RelationJudgment::no_relation())
        }
    }
}

/// Turns a judgment on pair `(i, j)`, `i < j`, into an edge.
pub fn resolve_direction(judgment: &RelationJudgment, i: usize, j: usize) -> Option<Edge> {
    let label = judgment.relation?;
    let (src, dst) = match judgment.direction {
        Direction::Forward => (i, j),
        Direction::Backward => (j, i),
    };
    Some(Edge {
        src,
        dst,
        label,
        direction: judgment.direction,
        reason: judgment.reason.clone(),
    })
}

/// Labels every pair in the window and assembles the graph. Pairs are
/// independent and labelled according to the gateway's execution mode;
/// edges are kept in pair order.
pub fn build_graph(chunks: &[Chunk], window: usize, gateway: &Gateway, max_retries: u32) -> DiscourseGraph {
    let window = window.max(1);
    let pairs = enumerate_pairs(chunks.len(), window);
    let results = map_ordered(&pairs, gateway.exec(), |&(i, j)| {
        label_pair(&chunks[i - 1], &chunks[j - 1], gateway, max_retries)
    });
    let mut graph = DiscourseGraph::empty(chunks.len(), window);
    for (&(i, j), result) in pairs.iter().zip(results) {
        match result {
            Ok(judgment) => graph.edges.extend(resolve_direction(&judgment, i, j)),
            Err(e) => {
                tracing::warn!(i, j, error = %e, "relation labeling failed; pair skipped");
                graph.failed_pairs.push((i, j));
            }
        }
    }
    graph
}

/// Relation as compared across graphs: symmetric labels lose orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalRelation {
    pub a: usize,
    pub b: usize,
    pub label: RelationLabel,
}

pub fn canonical_relations(graph: &DiscourseGraph) -> BTreeSet<CanonicalRelation> {
    graph
        .edges
        .iter()
        .map(|e| {
            let (a, b) = if e.label.is_symmetric() {
                (e.src.min(e.dst), e.src.max(e.dst))
            } else {
                (e.src, e.dst)
            };
            CanonicalRelation { a, b, label: e.label }
        })
        .collect()
}

/// Jaccard overlap of the canonical relation sets; 1 when both are empty.
pub fn graph_consistency(a: &DiscourseGraph, b: &DiscourseGraph) -> Result<f64, GraphError> {
    if a.n_chunks != b.n_chunks {
        return Err(GraphError::ChunkCountMismatch(a.n_chunks, b.n_chunks));
    }
    let (sa, sb) = (canonical_relations(a), canonical_relations(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(sa.intersection(&sb).count() as f64 / union as f64)
}

/// A gold judgment for one pair, `relation == None` meaning unrelated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRelation {
    pub i: usize,
    pub j: usize,
    pub relation: Option<RelationLabel>,
}

/// Fraction of gold pairs whose predicted label (or absence) agrees.
pub fn relation_accuracy(graph: &DiscourseGraph, gold: &[GoldRelation]) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let hits = gold
        .iter()
        .filter(|g| graph.edge_between(g.i, g.j).map(|e| e.label) == g.relation)
        .count();
    Some(hits as f64 / gold.len() as f64)
}

#[cfg(test)]
mod tests;
