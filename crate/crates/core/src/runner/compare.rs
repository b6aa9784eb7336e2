use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{RunError, RunManifest};

/// One metric side by side; `delta = b - a` when both are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub delta: Option<f64>,
}

impl MetricRow {
    fn new(metric: impl Into<String>, a: Option<f64>, b: Option<f64>) -> Self {
        let delta = match (a, b) {
            (Some(x), Some(y)) => Some(y - x),
            _ => None,
        };
        MetricRow {
            metric: metric.into(),
            a,
            b,
            delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentComparison {
    pub id: String,
    pub rows: Vec<MetricRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub run_a: String,
    pub run_b: String,
    pub strategy_a: String,
    pub strategy_b: String,
    pub collection_hash: String,
    pub rows: Vec<MetricRow>,
    pub documents: Vec<DocumentComparison>,
}

/// Run-level and per-document metric table for two runs over the same
/// collection.
pub fn compare_runs(a: &RunManifest, b: &RunManifest) -> Result<ComparisonReport, RunError> {
    if a.collection_hash != b.collection_hash {
        return Err(RunError::CollectionMismatch {
            a: a.collection_hash.clone(),
            b: b.collection_hash.clone(),
        });
    }
    let mut rows = vec![
        MetricRow::new("d_bleu", a.means.d_bleu, b.means.d_bleu),
        MetricRow::new(
            "terminology_accuracy",
            a.means.terminology_accuracy,
            b.means.terminology_accuracy,
        ),
    ];
    let external: BTreeMap<&String, ()> = a
        .means
        .external_scores
        .keys()
        .chain(b.means.external_scores.keys())
        .map(|k| (k, ()))
        .collect();
    for name in external.keys() {
        rows.push(MetricRow::new(
            format!("external:{name}"),
            a.means.external_scores.get(*name).copied(),
            b.means.external_scores.get(*name).copied(),
        ));
    }
    let (ca, cb) = (&a.cost_report, &b.cost_report);
    rows.extend([
        MetricRow::new(
            "avg_input_tokens_per_call",
            Some(ca.avg_input_tokens_per_call),
            Some(cb.avg_input_tokens_per_call),
        ),
        MetricRow::new(
            "avg_output_tokens_per_call",
            Some(ca.avg_output_tokens_per_call),
            Some(cb.avg_output_tokens_per_call),
        ),
        MetricRow::new("avg_calls", Some(ca.avg_calls), Some(cb.avg_calls)),
        MetricRow::new("avg_total_tokens", Some(ca.avg_total_tokens), Some(cb.avg_total_tokens)),
    ]);

    let documents = a
        .documents
        .iter()
        .filter_map(|da| {
            let db = b.documents.iter().find(|d| d.id == da.id)?;
            let (ma, mb) = (&da.metrics, &db.metrics);
            Some(DocumentComparison {
                id: da.id.clone(),
                rows: vec![
                    MetricRow::new(
                        "d_bleu",
                        ma.as_ref().and_then(|m| m.d_bleu),
                        mb.as_ref().and_then(|m| m.d_bleu),
                    ),
                    MetricRow::new(
                        "terminology_accuracy",
                        ma.as_ref().and_then(|m| m.terminology_accuracy),
                        mb.as_ref().and_then(|m| m.terminology_accuracy),
                    ),
                    MetricRow::new("calls", Some(da.ledger.calls as f64), Some(db.ledger.calls as f64)),
                    MetricRow::new(
                        "total_tokens",
                        Some(da.ledger.total_tokens() as f64),
                        Some(db.ledger.total_tokens() as f64),
                    ),
                ],
            })
        })
        .collect();

    Ok(ComparisonReport {
        run_a: a.run_id.clone(),
        run_b: b.run_id.clone(),
        strategy_a: a.strategy.to_string(),
        strategy_b: b.strategy.to_string(),
        collection_hash: a.collection_hash.clone(),
        rows,
        documents,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

impl ComparisonReport {
    /// Plain-text table of the run-level rows.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self.rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
        let _ = writeln!(
            out,
            "{:<width$}  {:>14}  {:>14}  {:>12}",
            "metric", self.strategy_a, self.strategy_b, "delta"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>14}  {:>14}  {:>12}",
                r.metric,
                cell(r.a),
                cell(r.b),
                cell(r.delta)
            );
        }
        out
    }
}
