use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::gateway::Tokenizer;

/// Description of the smoothing applied, recorded next to every score.
pub const SMOOTHING: &str = "add-one on zero-match orders n>=2: p_n = 1/(candidates+1)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuDetail {
    pub score: f64,
    /// Modified precision per order, after smoothing.
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hypothesis_length: usize,
    pub reference_length: usize,
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU over the whole document as a single segment.
pub fn bleu_detail(
    hypothesis: &str,
    reference: &str,
    max_n: usize,
    tokenizer: Tokenizer,
) -> Result<BleuDetail, MetricsError> {
    let r = tokenizer.tokenize(reference);
    if r.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let h = tokenizer.tokenize(hypothesis);
    let max_n = max_n.max(1);
    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let hyp = ngram_counts(&h, n);
        let refs = ngram_counts(&r, n);
        let matches: usize = hyp.iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
        let candidates = h.len().saturating_sub(n - 1);
        let p = if matches > 0 {
            matches as f64 / candidates as f64
        } else if n >= 2 {
            1.0 / (candidates as f64 + 1.0)
        } else {
            0.0
        };
        precisions.push(p);
    }
    let brevity_penalty = if h.is_empty() {
        0.0
    } else if h.len() < r.len() {
        (1.0 - r.len() as f64 / h.len() as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.contains(&0.0) || brevity_penalty == 0.0 {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / max_n as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuDetail {
        score,
        precisions,
        brevity_penalty,
        hypothesis_length: h.len(),
        reference_length: r.len(),
    })
}

/// Document-level BLEU in [0, 100].
pub fn d_bleu(hypothesis: &str, reference: &str, max_n: usize, tokenizer: Tokenizer) -> Result<f64, MetricsError> {
    bleu_detail(hypothesis, reference, max_n, tokenizer).map(|d| d.score)
}
