//! Writers and readers for run artifacts.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{RunError, RunManifest, RUN_MANIFEST};
use crate::chunker::Chunk;
use crate::cohesion::CohesionOutcome;
use crate::graph::DiscourseGraph;
use crate::metrics::MetricsReport;
use crate::translator::TranslatedChunk;

pub const CHUNKS: &str = "chunks.jsonl";
pub const GRAPH: &str = "graph.json";
pub const GRAPH_DOT: &str = "graph.dot";
pub const TRANSLATIONS: &str = "translations.jsonl";
pub const OUTPUT: &str = "output.txt";
pub const METRICS: &str = "metrics.json";
pub const COHESION: &str = "cohesion.json";

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    std::fs::write(path, bytes).map_err(|e| RunError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serialises");
    s.push('\n');
    s
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("artifact serialises") + "\n")
        .collect()
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    serde_json::from_str(&read(path)?).map_err(|e| RunError::Artifact(format!("{}: {e}", path.display())))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RunError> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| RunError::Artifact(format!("{}:{}: {e}", path.display(), k + 1)))
        })
        .collect()
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, RunError> {
    read_jsonl(path)
}

pub fn read_graph(path: &Path) -> Result<DiscourseGraph, RunError> {
    let graph: DiscourseGraph = read_json(path)?;
    graph
        .validate()
        .map_err(|e| RunError::Artifact(format!("{}: {e}", path.display())))?;
    Ok(graph)
}

pub fn read_translations(path: &Path) -> Result<Vec<TranslatedChunk>, RunError> {
    read_jsonl(path)
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport, RunError> {
    read_json(path)
}

pub fn read_cohesion(path: &Path) -> Result<Vec<CohesionOutcome>, RunError> {
    read_json(path)
}

/// Reads `run.json` from a run directory.
pub fn load_run(dir: &Path) -> Result<RunManifest, RunError> {
    let path = if dir.is_file() {
        dir.to_path_buf()
    } else {
        dir.join(RUN_MANIFEST)
    };
    read_json(&path)
}

/// Re-reads every artifact listed in the manifest with its reader and
/// checks that re-serialising it reproduces the file.
pub fn verify_artifacts(dir: &Path, manifest: &RunManifest) -> Result<(), RunError> {
    for doc in &manifest.documents {
        for name in &doc.artifacts {
            let path = dir.join(name);
            let on_disk = read(&path)?;
            let file = Path::new(name).file_name().and_then(|f| f.to_str()).unwrap_or_default();
            let again = match file {
                CHUNKS => to_jsonl(&read_chunks(&path)?),
                GRAPH => to_json(&read_graph(&path)?),
                TRANSLATIONS => to_jsonl(&read_translations(&path)?),
                METRICS => to_json(&read_metrics(&path)?),
                COHESION => to_json(&read_cohesion(&path)?),
                GRAPH_DOT | OUTPUT => on_disk.clone(),
                other => return Err(RunError::Artifact(format!("unknown artifact {other:?}"))),
            };
            if again != on_disk {
                return Err(RunError::Artifact(format!("{} does not round-trip", path.display())));
            }
        }
    }
    Ok(())
}
