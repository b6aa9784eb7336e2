//! Extraction and validation of JSON payloads embedded in model replies.

use serde_json::Value;

/// Kind of value expected under a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    String,
    Integer,
    Bool,
    Array,
    Object,
    /// Integer or string (e.g. chunk ids, which the chunking schema allows as either).
    IntegerOrString,
    Any,
}

impl ValueKind {
    fn accepts(self, v: &Value) -> bool {
        match self {
            ValueKind::String => v.is_string(),
            ValueKind::Integer => v.is_i64() || v.is_u64(),
            ValueKind::Bool => v.is_boolean(),
            ValueKind::Array => v.is_array(),
            ValueKind::Object => v.is_object(),
            ValueKind::IntegerOrString => v.is_i64() || v.is_u64() || v.is_string(),
            ValueKind::Any => true,
        }
    }
}

/// Required top-level keys of a JSON object and the kinds of their values.
#[derive(Debug, Clone, Default)]
pub struct StructuredShape {
    fields: Vec<(String, ValueKind)>,
}

impl StructuredShape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, name: &str, kind: ValueKind) -> Self {
        self.fields.push((name.to_string(), kind));
        self
    }

    pub fn validate(&self, value: &Value) -> Result<(), String> {
        let obj = value.as_object().ok_or_else(|| "expected a JSON object".to_string())?;
        for (name, kind) in &self.fields {
            match obj.get(name) {
                None => return Err(format!("missing key `{name}`")),
                Some(v) if !kind.accepts(v) => {
                    return Err(format!("key `{name}` has the wrong type (expected {kind:?})"))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Extracts the first object from `raw`, parses it and checks the shape.
    pub fn parse(&self, raw: &str) -> Result<Value, String> {
        let block = extract_json_block(raw).ok_or_else(|| "no balanced {...} block found".to_string())?;
        let value: Value = serde_json::from_str(block).map_err(|e| format!("invalid JSON: {e}"))?;
        self.validate(&value)?;
        Ok(value)
    }
}

/// Returns the first balanced `{...}` block, skipping braces inside JSON
/// string literals. Prose and code fences around the block are ignored.
pub fn extract_json_block(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut search_from = 0;
    while let Some(rel) = text[search_from..].find('{') {
        let start = search_from + rel;
        let mut depth = 0usize;
        let mut in_str = false;
        let mut escaped = false;
        for (off, &b) in bytes[start..].iter().enumerate() {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(&text[start..=start + off]);
                    }
                }
                _ => {}
            }
        }
        // unbalanced from this opening brace; try the next one
        search_from = start + 1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extracts_from_fenced_prose() {
        let raw = "Sure! Here it is:\n```json\n{\"a\": {\"b\": \"}\"}}\n```\nthanks";
        assert_eq!(extract_json_block(raw), Some("{\"a\": {\"b\": \"}\"}}"));
    }

    #[test]
    fn handles_escaped_quotes() {
        let raw = r#"{"reason": "he said \"}\"", "x": 1} trailing {"#;
        assert_eq!(extract_json_block(raw), Some(r#"{"reason": "he said \"}\"", "x": 1}"#));
    }

    #[test]
    fn no_block() {
        assert_eq!(extract_json_block("no json here"), None);
        assert_eq!(extract_json_block("{ unclosed"), None);
    }

    #[test]
    fn shape_validation() {
        let shape = StructuredShape::new()
            .field("reason", ValueKind::String)
            .field("relation", ValueKind::String)
            .field("direction", ValueKind::String);
        let ok = shape
            .parse(r#"{"reason":"same entity","relation":"entity_coreference","direction":"forward"}"#)
            .unwrap();
        assert_eq!(ok["relation"], "entity_coreference");
        assert!(shape
            .parse(r#"{"reason":"x","relation":"y"}"#)
            .unwrap_err()
            .contains("direction"));
        assert!(shape.parse(r#"{"reason":1,"relation":"y","direction":"f"}"#).is_err());
        assert!(shape.parse("[1,2]").is_err());
    }
}
