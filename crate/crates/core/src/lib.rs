//! Discourse-graph-guided document-level machine translation.
//!
//! A document is split into sentence-aligned chunks by an LLM, chunk pairs
//! inside a bounded window are labeled with rhetorical relations to form a
//! directed discourse graph, and each chunk is then translated with the
//! source text of its graph in-neighbours (and their relation labels) as
//! context. Baseline strategies, document-level metrics and an LLM-as-judge
//! cohesion evaluator are provided alongside.
//!
//! Every LLM interaction goes through [`gateway::Gateway`], which accounts
//! calls and tokens per pipeline stage and can be backed by a live
//! chat-completions endpoint or by deterministic mock backends.

pub mod baselines;
pub mod chunker;
pub mod cohesion;
pub mod exec;
pub mod gateway;
pub mod graph;
pub mod lang;
pub mod metrics;
pub mod prompts;
pub mod runner;
pub mod translator;

pub use baselines::StrategyId;
pub use chunker::{Chunk, Sentence};
pub use gateway::{ChatRequest, ChatResponse, CostLedger, Gateway, Stage};
pub use graph::{DiscourseGraph, Edge, RelationLabel};
pub use lang::Language;
