//! Fixture-driven mock backend.
//!
//! A fixture is a JSONL file; each non-blank line that does not start with
//! `#` is one record:
//!
//! ```text
//! {"match": {"prompt": "<exact user text>"}, "response": "...", "input_tokens": 3, "output_tokens": 2}
//! {"match": {"tag": "translate", "ordinal": 0}, "response": "..."}
//! {"match": {"tag": "judge"}, "response": "..."}
//! ```
//!
//! Lookup order for a request: exact prompt records, then the record whose
//! ordinal equals the number of earlier calls with the same tag, then the
//! tag's fallback records. Several records with the same key are served in
//! file order and the last one repeats. Token counts are optional; when
//! absent the gateway estimates them.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;
use thiserror::Error;

use super::{Backend, BackendError, BackendReply, ChatRequest, Stage};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot read fixture {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("fixture line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    #[serde(rename = "match")]
    matcher: RawMatch,
    response: String,
    input_tokens: Option<u64>,
    output_tokens: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatch {
    prompt: Option<String>,
    tag: Option<String>,
    ordinal: Option<u64>,
}

#[derive(Debug, Clone)]
struct Entry {
    text: String,
    usage: Option<(u64, u64)>,
}

impl Entry {
    fn reply(&self) -> BackendReply {
        BackendReply {
            text: self.text.clone(),
            usage: self.usage,
        }
    }
}

#[derive(Debug, Default)]
struct Cursors {
    per_tag_calls: HashMap<Stage, u64>,
    prompt: HashMap<String, usize>,
    fallback: HashMap<Stage, usize>,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    id: String,
    by_prompt: HashMap<String, Vec<Entry>>,
    by_ordinal: HashMap<(Stage, u64), Entry>,
    fallback: HashMap<Stage, Vec<Entry>>,
    cursors: Mutex<Cursors>,
}

impl ScriptedBackend {
    fn empty(id: &str) -> Self {
        ScriptedBackend {
            id: id.to_string(),
            by_prompt: HashMap::new(),
            by_ordinal: HashMap::new(),
            fallback: HashMap::new(),
            cursors: Mutex::new(Cursors::default()),
        }
    }

    /// Exact prompt → response pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut b = Self::empty("mock:inline");
        for (p, r) in pairs {
            b.by_prompt.entry(p.to_string()).or_default().push(Entry {
                text: r.to_string(),
                usage: None,
            });
        }
        b
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut b = Self::parse_jsonl(&text)?;
        b.id = format!("mock:{}", path.display());
        Ok(b)
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, ScriptError> {
        let mut b = Self::empty("mock:inline");
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| ScriptError::Record { line: line_no, message };
            let raw: RawRecord = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
            let usage = match (raw.input_tokens, raw.output_tokens) {
                (None, None) => None,
                (i, o) => Some((i.unwrap_or(0), o.unwrap_or(0))),
            };
            let entry = Entry {
                text: raw.response,
                usage,
            };
            let m = raw.matcher;
            match (m.prompt, m.tag, m.ordinal) {
                (Some(p), None, None) => b.by_prompt.entry(p).or_default().push(entry),
                (None, Some(tag), ordinal) => {
                    let stage = Stage::parse(&tag).ok_or_else(|| err(format!("unknown tag `{tag}`")))?;
                    match ordinal {
                        Some(n) => {
                            if b.by_ordinal.insert((stage, n), entry).is_some() {
                                return Err(err(format!("duplicate ordinal {n} for tag `{tag}`")));
                            }
                        }
                        None => b.fallback.entry(stage).or_default().push(entry),
                    }
                }
                _ => {
                    return Err(err(
                        "match must be either {\"prompt\"} or {\"tag\"[, \"ordinal\"]}".to_string()
                    ))
                }
            }
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.by_prompt.values().map(Vec::len).sum::<usize>()
            + self.by_ordinal.len()
            + self.fallback.values().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn next_in_queue<'a>(queue: &'a [Entry], cursor: &mut usize) -> &'a Entry {
    let e = &queue[(*cursor).min(queue.len() - 1)];
    *cursor += 1;
    e
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let mut cur = self.cursors.lock().expect("script cursor lock poisoned");
        let calls = cur.per_tag_calls.entry(request.tag).or_insert(0);
        let ordinal = *calls;
        *calls += 1;

        if let Some(queue) = self.by_prompt.get(&request.user_text) {
            let c = cur.prompt.entry(request.user_text.clone()).or_insert(0);
            return Ok(next_in_queue(queue, c).reply());
        }
        if let Some(e) = self.by_ordinal.get(&(request.tag, ordinal)) {
            return Ok(e.reply());
        }
        if let Some(queue) = self.fallback.get(&request.tag) {
            let c = cur.fallback.entry(request.tag).or_insert(0);
            return Ok(next_in_queue(queue, c).reply());
        }
        Err(BackendError::NoAnswer(format!(
            "no script entry for {} call #{ordinal}",
            request.tag
        )))
    }

    fn order_sensitive(&self) -> bool {
        !self.by_ordinal.is_empty()
            || self.by_prompt.values().any(|q| q.len() > 1)
            || self.fallback.values().any(|q| q.len() > 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: Stage, text: &str) -> ChatRequest {
        ChatRequest::new(tag, text)
    }

    #[test]
    fn prompt_beats_ordinal_beats_fallback() {
        let b = ScriptedBackend::parse_jsonl(
            r#"
# comment
{"match":{"prompt":"exact"},"response":"P"}
{"match":{"tag":"translate","ordinal":1},"response":"O1"}
{"match":{"tag":"translate"},"response":"F"}
"#,
        )
        .unwrap();
        assert_eq!(b.call(&req(Stage::Translate, "x")).unwrap().text, "F");
        assert_eq!(b.call(&req(Stage::Translate, "x")).unwrap().text, "O1");
        assert_eq!(b.call(&req(Stage::Translate, "exact")).unwrap().text, "P");
        assert_eq!(b.call(&req(Stage::Translate, "x")).unwrap().text, "F");
        assert!(b.call(&req(Stage::Chunk, "x")).is_err());
        assert!(b.order_sensitive());
    }

    #[test]
    fn queued_responses_repeat_last() {
        let b = ScriptedBackend::parse_jsonl(
            "{\"match\":{\"prompt\":\"q\"},\"response\":\"1\"}\n{\"match\":{\"prompt\":\"q\"},\"response\":\"2\"}",
        )
        .unwrap();
        let texts: Vec<_> = (0..3).map(|_| b.call(&req(Stage::Judge, "q")).unwrap().text).collect();
        assert_eq!(texts, ["1", "2", "2"]);
    }

    #[test]
    fn usage_is_passed_through() {
        let b = ScriptedBackend::parse_jsonl(
            r#"{"match":{"prompt":"q"},"response":"r","input_tokens":11,"output_tokens":4}"#,
        )
        .unwrap();
        assert_eq!(b.call(&req(Stage::Judge, "q")).unwrap().usage, Some((11, 4)));
        assert!(!b.order_sensitive());
    }

    #[test]
    fn malformed_records_report_line() {
        let err = ScriptedBackend::parse_jsonl("\n{\"match\":{},\"response\":\"r\"}").unwrap_err();
        assert!(matches!(err, ScriptError::Record { line: 2, .. }));
        let err = ScriptedBackend::parse_jsonl(r#"{"match":{"tag":"bogus"},"response":"r"}"#).unwrap_err();
        assert!(err.to_string().contains("unknown tag"));
        assert!(ScriptedBackend::parse_jsonl("not json").is_err());
    }
}
