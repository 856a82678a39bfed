//! Replay and recording tool backends: content-addressed fixtures on disk.
//!
//! Fixture layout: one JSON file per request under the fixture directory,
//! named `<kind>-<sha256-of-canonical-request>.json`. A symbol index may be
//! provided as `symbols.json` (a JSON array of entries). Replay mode fails
//! closed: a missing fixture is a hard error naming the key.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use super::{CompilerReport, SymbolEntry, SymbolIndex, ToolBackend, ToolError, ToolOutcome};
use crate::net::canonical_hash;

fn request_key(kind: &str, body: &serde_json::Value) -> String {
    format!("{kind}-{}", canonical_hash(body))
}

/// Serves tool responses from fixture files; never touches the network.
#[derive(Debug)]
pub struct ReplayToolBackend {
    dir: PathBuf,
    snapshot: String,
    index: SymbolIndex,
}

impl ReplayToolBackend {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ToolError> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            return Err(ToolError::Configuration(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        let snapshot = std::fs::read_to_string(dir.join("snapshot_id"))
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|_| "replay-snapshot".to_string());
        let index = match std::fs::read_to_string(dir.join("symbols.json")) {
            Ok(text) => {
                let entries: Vec<SymbolEntry> = serde_json::from_str(&text).map_err(|e| {
                    ToolError::Configuration(format!("malformed symbols.json: {e}"))
                })?;
                SymbolIndex::new(entries)
            }
            Err(_) => SymbolIndex::default(),
        };
        Ok(ReplayToolBackend { dir, snapshot, index })
    }

    fn load<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T, ToolError> {
        let path = self.dir.join(format!("{key}.json"));
        let text = std::fs::read_to_string(&path)
            .map_err(|_| ToolError::FixtureMiss { key: key.to_string() })?;
        serde_json::from_str(&text)
            .map_err(|e| ToolError::Configuration(format!("malformed fixture {key}: {e}")))
    }
}

impl ToolBackend for ReplayToolBackend {
    fn snapshot_id(&self) -> &str {
        &self.snapshot
    }

    fn compile(&self, content: &str) -> Result<CompilerReport, ToolError> {
        self.load(&request_key("compile", &json!({ "content": content })))
    }

    fn herald_draft(&self, statement: &str) -> Result<ToolOutcome, ToolError> {
        self.load(&request_key("herald", &json!({ "statement": statement })))
    }

    fn web_search(&self, query: &str) -> Result<ToolOutcome, ToolError> {
        self.load(&request_key("search", &json!({ "query": query })))
    }

    fn symbol_index(&self) -> &SymbolIndex {
        &self.index
    }
}

/// Wraps a backend and writes every response as a replay fixture.
pub struct RecordingToolBackend {
    inner: Arc<dyn ToolBackend>,
    dir: PathBuf,
}

impl RecordingToolBackend {
    pub fn new(inner: Arc<dyn ToolBackend>, dir: impl AsRef<Path>) -> Result<Self, ToolError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("snapshot_id"), inner.snapshot_id())?;
        let entries = inner.symbol_index().entries().to_vec();
        std::fs::write(
            dir.join("symbols.json"),
            serde_json::to_string_pretty(&entries).expect("symbol entries serialize"),
        )?;
        Ok(RecordingToolBackend { inner, dir })
    }

    fn record<T: serde::Serialize>(&self, key: &str, value: &T) -> Result<(), ToolError> {
        let path = self.dir.join(format!("{key}.json"));
        std::fs::write(path, serde_json::to_string_pretty(value).expect("fixtures serialize"))?;
        Ok(())
    }
}

impl ToolBackend for RecordingToolBackend {
    fn snapshot_id(&self) -> &str {
        self.inner.snapshot_id()
    }

    fn compile(&self, content: &str) -> Result<CompilerReport, ToolError> {
        let report = self.inner.compile(content)?;
        self.record(&request_key("compile", &json!({ "content": content })), &report)?;
        Ok(report)
    }

    fn herald_draft(&self, statement: &str) -> Result<ToolOutcome, ToolError> {
        let out = self.inner.herald_draft(statement)?;
        self.record(&request_key("herald", &json!({ "statement": statement })), &out)?;
        Ok(out)
    }

    fn web_search(&self, query: &str) -> Result<ToolOutcome, ToolError> {
        let out = self.inner.web_search(query)?;
        self.record(&request_key("search", &json!({ "query": query })), &out)?;
        Ok(out)
    }

    fn symbol_index(&self) -> &SymbolIndex {
        self.inner.symbol_index()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::stub::StubBackend;

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let src = "import Mathlib\ntheorem t : 1 = 1 := by sorry";
        let recorded = {
            let rec = RecordingToolBackend::new(
                Arc::new(StubBackend::with_default_table()),
                dir.path(),
            )
            .unwrap();
            let report = rec.compile(src).unwrap();
            rec.herald_draft("statement").unwrap();
            rec.web_search("query").unwrap();
            report
        };

        let replay = ReplayToolBackend::open(dir.path()).unwrap();
        assert_eq!(replay.compile(src).unwrap(), recorded);
        assert!(replay.herald_draft("statement").is_ok());
        assert!(replay.web_search("query").is_ok());
        assert!(!replay.symbol_index().is_empty());
    }

    #[test]
    fn fixture_miss_names_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let replay = ReplayToolBackend::open(dir.path()).unwrap();
        match replay.compile("never recorded") {
            Err(ToolError::FixtureMiss { key }) => assert!(key.starts_with("compile-")),
            other => panic!("expected fixture miss, got {other:?}"),
        }
    }

    #[test]
    fn missing_directory_is_a_configuration_error() {
        match ReplayToolBackend::open("/nonexistent/fixture/dir") {
            Err(ToolError::Configuration(_)) => {}
            other => panic!("expected configuration error, got {other:?}"),
        }
    }
}
