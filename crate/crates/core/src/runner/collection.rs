use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::metrics::{load_terms, TermPair};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub source_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermPair>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    #[serde(default)]
    source: Option<PathBuf>,
    #[serde(default)]
    source_text: Option<String>,
    #[serde(default)]
    reference: Option<PathBuf>,
    #[serde(default)]
    reference_text: Option<String>,
    #[serde(default)]
    terms: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    documents: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && id.chars().all(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Loads a document collection, ordered by id.
///
/// `path` is either a manifest file, a directory holding `manifest.json`,
/// or a directory of `<id>.src.txt` files with optional `<id>.ref.txt`
/// references and `<id>.terms.tsv` / `<id>.terms.jsonl` term lists.
///
/// Manifest shape: `{"documents": [{"id", "source" | "source_text",
/// "reference"? | "reference_text"?, "terms"?}]}`; paths are relative to
/// the manifest.
pub fn load_collection(path: &Path) -> Result<Vec<DocumentRecord>, RunError> {
    let docs = if path.is_file() {
        load_manifest(path)?
    } else if path.join(MANIFEST_NAME).is_file() {
        load_manifest(&path.join(MANIFEST_NAME))?
    } else if path.is_dir() {
        scan_directory(path)?
    } else {
        return Err(RunError::Manifest(format!("{} does not exist", path.display())));
    };
    finish(docs)
}

fn finish(mut docs: Vec<DocumentRecord>) -> Result<Vec<DocumentRecord>, RunError> {
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in docs.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(RunError::DuplicateId(pair[0].id.clone()));
        }
    }
    for d in &docs {
        if !valid_id(&d.id) {
            return Err(RunError::Manifest(format!(
                "document id {:?} may only contain letters, digits, '-', '_' and '.'",
                d.id
            )));
        }
    }
    Ok(docs)
}

fn load_manifest(path: &Path) -> Result<Vec<DocumentRecord>, RunError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest: Manifest =
        serde_json::from_str(&read(path)?).map_err(|e| RunError::Manifest(format!("{}: {e}", path.display())))?;
    manifest
        .documents
        .into_iter()
        .map(|e| {
            let source_text = match (e.source_text, e.source) {
                (Some(t), None) => t,
                (None, Some(p)) => read(&base.join(p))?,
                _ => {
                    return Err(RunError::Manifest(format!(
                        "document {:?} needs exactly one of source / source_text",
                        e.id
                    )))
                }
            };
            let reference_text = match (e.reference_text, e.reference) {
                (Some(t), None) => Some(t),
                (None, Some(p)) => Some(read(&base.join(p))?),
                (None, None) => None,
                _ => {
                    return Err(RunError::Manifest(format!(
                        "document {:?} has both reference and reference_text",
                        e.id
                    )))
                }
            };
            let terms = match e.terms {
                Some(p) => load_terms(&base.join(p)).map_err(|err| RunError::Manifest(err.to_string()))?,
                None => Vec::new(),
            };
            Ok(DocumentRecord {
                id: e.id,
                source_text,
                reference_text,
                terms,
            })
        })
        .collect()
}

fn scan_directory(dir: &Path) -> Result<Vec<DocumentRecord>, RunError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| RunError::io(dir, e))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .collect();
    names.sort();
    let mut docs = Vec::new();
    for name in &names {
        let Some(id) = name.strip_suffix(".src.txt") else {
            continue;
        };
        let reference = dir.join(format!("{id}.ref.txt"));
        let reference_text = if reference.is_file() {
            Some(read(&reference)?)
        } else {
            None
        };
        let mut terms = Vec::new();
        for ext in ["terms.tsv", "terms.jsonl"] {
            let p = dir.join(format!("{id}.{ext}"));
            if p.is_file() {
                terms.extend(load_terms(&p).map_err(|err| RunError::Manifest(err.to_string()))?);
            }
        }
        docs.push(DocumentRecord {
            id: id.to_string(),
            source_text: read(&dir.join(name))?,
            reference_text,
            terms,
        });
    }
    if docs.is_empty() {
        return Err(RunError::Manifest(format!(
            "{} has no {MANIFEST_NAME} and no *.src.txt documents",
            dir.display()
        )));
    }
    Ok(docs)
}

/// Content hash over ids, texts, references and terms.
pub fn collection_hash(docs: &[DocumentRecord]) -> String {
    let canonical: BTreeMap<&str, &DocumentRecord> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let bytes = serde_json::to_vec(&canonical).expect("documents serialise");
    hex::encode(Sha256::digest(bytes))
}
