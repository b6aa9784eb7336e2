//! Call and token accounting per pipeline stage.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Pipeline stage a request belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Chunk,
    Relation,
    Translate,
    Judge,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Chunk, Stage::Relation, Stage::Translate, Stage::Judge];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Chunk => "chunk",
            Stage::Relation => "relation",
            Stage::Translate => "translate",
            Stage::Judge => "judge",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s.trim())
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Calls and token counts for one stage (or a whole run).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }

    fn add(&mut self, other: &Usage) {
        self.calls += other.calls;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
    }
}

/// Immutable snapshot of a run's accounting.
///
/// Totals are always the sum of the per-stage entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub per_tag: BTreeMap<Stage, Usage>,
}

impl CostLedger {
    pub fn from_stages(per_tag: BTreeMap<Stage, Usage>) -> Self {
        let mut total = Usage::default();
        for u in per_tag.values() {
            total.add(u);
        }
        CostLedger {
            calls: total.calls,
            input_tokens: total.input_tokens,
            output_tokens: total.output_tokens,
            per_tag,
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }

    pub fn stage(&self, stage: Stage) -> Usage {
        self.per_tag.get(&stage).copied().unwrap_or_default()
    }

    /// Sum of several ledgers, stage by stage.
    pub fn merged<'a>(ledgers: impl IntoIterator<Item = &'a CostLedger>) -> CostLedger {
        let mut per_tag: BTreeMap<Stage, Usage> = BTreeMap::new();
        for l in ledgers {
            for (stage, u) in &l.per_tag {
                per_tag.entry(*stage).or_default().add(u);
            }
        }
        CostLedger::from_stages(per_tag)
    }

    /// Checks the conservation invariant between totals and stages.
    pub fn is_consistent(&self) -> bool {
        let sum = CostLedger::from_stages(self.per_tag.clone());
        sum.calls == self.calls && sum.input_tokens == self.input_tokens && sum.output_tokens == self.output_tokens
    }
}

/// Lock-free accumulator shared by concurrent callers.
#[derive(Debug, Default)]
pub struct Ledger {
    counters: [[AtomicU64; 3]; 4],
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, stage: Stage, input_tokens: u64, output_tokens: u64) {
        let c = &self.counters[stage.slot()];
        c[0].fetch_add(1, Ordering::Relaxed);
        c[1].fetch_add(input_tokens, Ordering::Relaxed);
        c[2].fetch_add(output_tokens, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CostLedger {
        let mut per_tag = BTreeMap::new();
        for stage in Stage::ALL {
            let c = &self.counters[stage.slot()];
            let u = Usage {
                calls: c[0].load(Ordering::Relaxed),
                input_tokens: c[1].load(Ordering::Relaxed),
                output_tokens: c[2].load(Ordering::Relaxed),
            };
            if u.calls > 0 {
                per_tag.insert(stage, u);
            }
        }
        CostLedger::from_stages(per_tag)
    }
}
