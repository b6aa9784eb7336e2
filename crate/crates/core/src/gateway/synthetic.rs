//! Deterministic stage-aware mock backend.
//!
//! Recognises the prompts rendered by this crate and answers them without a
//! model: chunking prompts get a valid grouping of the numbered sentences,
//! relation prompts get a hash-derived judgment, translation prompts echo the
//! source text, and judge prompts annotate a fixed pronoun/conjunction
//! lexicon. Replies depend only on the prompt and the seed, so the backend
//! is shareable across threads and order-insensitive.

use std::time::Duration;

use serde_json::json;

use super::{Backend, BackendError, BackendReply, ChatRequest, Stage};
use crate::cohesion::{self, Dimension};
use crate::prompts;

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    /// Chunk sizes are drawn from `1..=max_group` sentences.
    pub max_group: usize,
    /// Percentage of chunking windows whose final sentence is carried over.
    pub carry_percent: u64,
    /// Percentage of chunk pairs that receive a relation.
    pub relation_percent: u64,
    /// Artificial per-call delay, for benchmarking scheduling.
    pub latency: Duration,
    pub seed: u64,
}

impl Default for SyntheticBackend {
    fn default() -> Self {
        SyntheticBackend {
            max_group: 3,
            carry_percent: 0,
            relation_percent: 60,
            latency: Duration::ZERO,
            seed: 0,
        }
    }
}

// Surface forms as a model might spell them; exercises label normalisation.
const RELATION_SPELLINGS: [&str; 10] = [
    "Background->Core",
    "Core->Detail",
    "Motivation->Method",
    "Cause->Effect",
    "Contrast",
    "Comparison",
    "Condition",
    "Evaluation",
    "Entity Coreference",
    "terminology_definition",
];

fn fnv1a(seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for p in parts {
        for b in *p {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Number of `[k] ` numbered lines in a chunking window.
fn count_numbered_sentences(content: &str) -> usize {
    let mut n = 0;
    for line in content.lines() {
        if line.starts_with(&format!("[{n}] ")) || line == format!("[{n}]") {
            n += 1;
        }
    }
    n
}

fn chunk_ids(prompt: &str) -> Option<(usize, usize)> {
    let mut it = prompt.match_indices("**Chunk ").map(|(i, m)| {
        let rest = &prompt[i + m.len()..];
        let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
        digits.parse::<usize>().ok()
    });
    Some((it.next()??, it.next()??))
}

impl SyntheticBackend {
    pub fn new(seed: u64) -> Self {
        SyntheticBackend {
            seed,
            ..Self::default()
        }
    }

    fn chunking(&self, prompt: &str) -> String {
        let content =
            prompts::section(prompt, prompts::CHUNKING_CONTENT_START, prompts::CHUNKING_CONTENT_END).unwrap_or("");
        let n = count_numbered_sentences(content);
        let mut state = fnv1a(self.seed, &[b"chunk", content.as_bytes()]);
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut next = 0;
        while next < n {
            state = splitmix(state);
            let size = 1 + (state % self.max_group.max(1) as u64) as usize;
            let end = (next + size).min(n);
            groups.push((next..end).collect());
            next = end;
        }
        state = splitmix(state);
        let carry = n >= 2 && state % 100 < self.carry_percent;
        if carry {
            let last = groups.last_mut().expect("n >= 2");
            if last.len() > 1 {
                let tail = last.pop().expect("non-empty");
                groups.push(vec![tail]);
            }
        }
        let count = groups.len();
        let chunks: Vec<_> = groups
            .into_iter()
            .enumerate()
            .map(|(k, idx)| {
                json!({
                    "chunk_id": k + 1,
                    "rationale": "Adjacent sentences grouped by the synthetic backend.",
                    "sentence_indices": idx,
                    "carry_over": carry && k + 1 == count,
                })
            })
            .collect();
        json!({ "chunks": chunks }).to_string()
    }

    fn relation(&self, prompt: &str) -> String {
        let (i, j) = chunk_ids(prompt).unwrap_or((0, 0));
        let h = splitmix(fnv1a(self.seed, &[b"rel", &i.to_le_bytes(), &j.to_le_bytes()]));
        if h % 100 >= self.relation_percent {
            return json!({"reason": "no relation found", "relation": "none", "direction": "forward"}).to_string();
        }
        let label = RELATION_SPELLINGS[((h >> 8) % 10) as usize];
        let direction = if (h >> 20).is_multiple_of(4) {
            "backward"
        } else {
            "forward"
        };
        json!({
            "reason": format!("Chunk {i} and Chunk {j} are linked."),
            "relation": label,
            "direction": direction,
        })
        .to_string()
    }

    fn translation(&self, prompt: &str) -> String {
        prompts::section(prompt, prompts::SOURCE_TEXT_START, prompts::SOURCE_TEXT_END)
            .unwrap_or("")
            .trim()
            .to_string()
    }

    fn judge(&self, prompt: &str) -> String {
        if let Some(doc) = prompts::section(prompt, prompts::ANNOTATION_DOC_START, prompts::FENCE_END) {
            let dim = if prompt.starts_with("# Source Conjunction") {
                Dimension::Conjunction
            } else {
                Dimension::Coreference
            };
            return cohesion::lexicon_annotate(doc, dim);
        }
        if let Some(annotated) = prompts::section(prompt, prompts::EVALUATION_ANNOTATED_START, prompts::FENCE_END) {
            let dim = if prompt.starts_with("# Conjunction") {
                Dimension::Conjunction
            } else {
                Dimension::Coreference
            };
            return cohesion::mark_all_correct(annotated, dim).unwrap_or_else(|_| annotated.to_string());
        }
        String::new()
    }
}

impl Backend for SyntheticBackend {
    fn id(&self) -> &str {
        "synthetic"
    }

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let p = &request.user_text;
        let text = match request.tag {
            Stage::Chunk => self.chunking(p),
            Stage::Relation => self.relation(p),
            Stage::Translate => self.translation(p),
            Stage::Judge => self.judge(p),
        };
        Ok(BackendReply::text(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::render;

    #[test]
    fn chunking_covers_every_sentence() {
        let content = "[0] A.\n[1] B.\n[2] C.\n[3] D.";
        let prompt = render(prompts::CHUNKING, &[("chunk_content", content)]);
        let b = SyntheticBackend {
            carry_percent: 100,
            ..SyntheticBackend::default()
        };
        let reply = b.call(&ChatRequest::new(Stage::Chunk, prompt)).unwrap().text;
        let v: serde_json::Value = serde_json::from_str(&reply).unwrap();
        let chunks = v["chunks"].as_array().unwrap();
        let mut all = Vec::new();
        for c in chunks {
            for i in c["sentence_indices"].as_array().unwrap() {
                all.push(i.as_u64().unwrap());
            }
        }
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(chunks.last().unwrap()["carry_over"], true);
    }

    #[test]
    fn relation_is_deterministic() {
        let prompt = render(
            prompts::RELATION,
            &[("i", "2"), ("j", "5"), ("chunk_i", "x"), ("chunk_j", "y")],
        );
        assert_eq!(chunk_ids(&prompt), Some((2, 5)));
        let b = SyntheticBackend::new(7);
        let r1 = b.call(&ChatRequest::new(Stage::Relation, prompt.clone())).unwrap();
        let r2 = b.call(&ChatRequest::new(Stage::Relation, prompt)).unwrap();
        assert_eq!(r1, r2);
    }
}
