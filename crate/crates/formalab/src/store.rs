//! Append-only run store: one JSONL file of run records per experiment plus
//! a directory of content-addressed transcripts.
//!
//! Records are keyed by (theorem, config, orchestrator). Writing an existing
//! key is a conflict unless the overwrite flag is set, in which case a
//! superseding record is appended and the latest one wins on read. Appends
//! are serialized through a lock so parallel episode workers are safe;
//! readers only ever see whole lines.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::EpisodeTranscript;
use crate::config::ToolConfig;
use crate::corpus::Domain;
use crate::judge::JudgeVerdict;

/// Outcome of one episode: everything analysis needs without reopening the
/// transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub theorem_id: String,
    pub config: ToolConfig,
    pub orchestrator_id: String,
    pub steps_used: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_code: Option<String>,
    pub compile_pass: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub verdicts: BTreeMap<String, JudgeVerdict>,
    pub faithful_primary: bool,
    pub faithful_consensus: bool,
    /// Content hash of the stored transcript.
    pub transcript_ref: String,
    pub wall_time_ms: u64,
    /// Judges that exhausted their retry cap on this run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub judge_invalid: Vec<String>,
}

impl RunRecord {
    /// Storage key: one record per (theorem, config, orchestrator).
    pub fn key(&self) -> String {
        format!("{}::{}::{}", self.theorem_id, self.config, self.orchestrator_id)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O failure ({context}): {source}; the store is append-only, retry once the path is writable")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("record violates invariant: {0}")]
    Invariant(String),
    #[error("record for key {key} already exists; pass overwrite to supersede it")]
    Conflict { key: String },
    #[error("malformed record at {path} line {line}: {message}")]
    Malformed { path: String, line: usize, message: String },
    #[error("transcript {0} is not stored")]
    MissingTranscript(String),
    #[error("experiment manifest mismatch: {0}")]
    Manifest(String),
}

fn io_err(context: &str) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { context: context.to_string(), source }
}

/// Experiment-level facts recorded once, next to the runs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub experiment_id: String,
    /// Step budget all stored runs must respect.
    pub t_max: u32,
}

/// Filter for [`RunStore::query_runs`]; `None` fields match everything.
#[derive(Debug, Clone, Default)]
pub struct RunFilter {
    pub config: Option<ToolConfig>,
    pub domain: Option<Domain>,
    pub orchestrator_id: Option<String>,
}

impl RunFilter {
    pub fn config(config: ToolConfig) -> Self {
        RunFilter { config: Some(config), ..Default::default() }
    }
}

struct StoreInner {
    records: BTreeMap<String, RunRecord>,
    file: std::fs::File,
}

/// One experiment's persistent store.
pub struct RunStore {
    root: PathBuf,
    meta: StoreMeta,
    /// Maps theorem ids to domains for domain-filtered queries.
    domains: BTreeMap<String, Domain>,
    inner: Mutex<StoreInner>,
}

impl RunStore {
    /// Open (creating if needed) the store rooted at `dir`. An existing
    /// manifest must agree with `meta`.
    pub fn open(dir: impl AsRef<Path>, meta: StoreMeta) -> Result<Self, StoreError> {
        let root = dir.as_ref().to_path_buf();
        fs::create_dir_all(root.join("transcripts")).map_err(io_err("create store"))?;

        let manifest_path = root.join("experiment.json");
        if manifest_path.exists() {
            let text =
                fs::read_to_string(&manifest_path).map_err(io_err("read manifest"))?;
            let existing: StoreMeta = serde_json::from_str(&text).map_err(|e| {
                StoreError::Manifest(format!("unreadable manifest: {e}"))
            })?;
            if existing != meta {
                return Err(StoreError::Manifest(format!(
                    "store was created as {existing:?} but opened as {meta:?}"
                )));
            }
        } else {
            fs::write(
                &manifest_path,
                serde_json::to_string_pretty(&meta).expect("meta serializes"),
            )
            .map_err(io_err("write manifest"))?;
        }

        let runs_path = root.join("runs.jsonl");
        let mut records = BTreeMap::new();
        if runs_path.exists() {
            let reader =
                BufReader::new(fs::File::open(&runs_path).map_err(io_err("open runs file"))?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err("read runs file"))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: RunRecord =
                    serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                        path: runs_path.display().to_string(),
                        line: idx + 1,
                        message: e.to_string(),
                    })?;
                // Later lines supersede earlier ones for the same key.
                records.insert(record.key(), record);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&runs_path)
            .map_err(io_err("open runs file for append"))?;

        Ok(RunStore {
            root,
            meta,
            domains: BTreeMap::new(),
            inner: Mutex::new(StoreInner { records, file }),
        })
    }

    /// Teach the store theorem domains so queries can filter by domain.
    pub fn set_domains(&mut self, domains: BTreeMap<String, Domain>) {
        self.domains = domains;
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_path(&self) -> PathBuf {
        self.root.join("runs.jsonl")
    }

    fn check_invariants(&self, record: &RunRecord) -> Result<(), StoreError> {
        if record.steps_used > self.meta.t_max {
            return Err(StoreError::Invariant(format!(
                "steps_used {} exceeds the configured budget {}",
                record.steps_used, self.meta.t_max
            )));
        }
        if !record.compile_pass && (record.faithful_primary || record.faithful_consensus) {
            return Err(StoreError::Invariant(
                "faithful flags must be false when compile_pass is false".into(),
            ));
        }
        if !record.compile_pass {
            for (judge, verdict) in &record.verdicts {
                if verdict.faithful {
                    return Err(StoreError::Invariant(format!(
                        "judge {judge} marks a non-compiling run faithful"
                    )));
                }
            }
        }
        Ok(())
    }

    fn transcript_path(&self, transcript_ref: &str) -> PathBuf {
        self.root.join("transcripts").join(format!("{transcript_ref}.json"))
    }

    /// Durably append a record (and its transcript, when given); returns the
    /// storage key. Writing an existing key without `overwrite` is a
    /// conflict. When `transcript` is `None` the record's `transcript_ref`
    /// must already resolve.
    pub fn store_run(
        &self,
        record: &RunRecord,
        transcript: Option<&EpisodeTranscript>,
        overwrite: bool,
    ) -> Result<String, StoreError> {
        self.check_invariants(record)?;

        match transcript {
            Some(t) => {
                let hash = t.content_hash();
                if record.transcript_ref != hash {
                    return Err(StoreError::Invariant(format!(
                        "transcript_ref {} does not match transcript content hash {hash}",
                        record.transcript_ref
                    )));
                }
                let path = self.transcript_path(&hash);
                if !path.exists() {
                    let body = serde_json::to_string_pretty(t).expect("transcripts serialize");
                    fs::write(&path, body).map_err(io_err("write transcript"))?;
                }
            }
            None => {
                if !self.transcript_path(&record.transcript_ref).exists() {
                    return Err(StoreError::MissingTranscript(record.transcript_ref.clone()));
                }
            }
        }

        let key = record.key();
        let mut inner = self.inner.lock().unwrap();
        if inner.records.contains_key(&key) {
            let existing = &inner.records[&key];
            if existing == record {
                return Ok(key); // idempotent on identical content
            }
            if !overwrite {
                return Err(StoreError::Conflict { key });
            }
        }
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(inner.file, "{line}").map_err(io_err("append record"))?;
        inner.file.flush().map_err(io_err("flush record"))?;
        inner.records.insert(key.clone(), record.clone());
        Ok(key)
    }

    /// All records matching the filter, ordered by (theorem, config).
    pub fn query_runs(&self, filter: &RunFilter) -> Vec<RunRecord> {
        let inner = self.inner.lock().unwrap();
        let mut out: Vec<RunRecord> = inner
            .records
            .values()
            .filter(|r| {
                filter.config.map_or(true, |c| r.config == c)
                    && filter
                        .orchestrator_id
                        .as_ref()
                        .map_or(true, |o| &r.orchestrator_id == o)
                    && filter
                        .domain
                        .map_or(true, |d| self.domains.get(&r.theorem_id) == Some(&d))
            })
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            (&a.theorem_id, a.config.code(), &a.orchestrator_id)
                .cmp(&(&b.theorem_id, b.config.code(), &b.orchestrator_id))
        });
        out
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, theorem_id: &str, config: ToolConfig, orchestrator_id: &str) -> bool {
        let key = format!("{theorem_id}::{config}::{orchestrator_id}");
        self.inner.lock().unwrap().records.contains_key(&key)
    }

    pub fn load_transcript(&self, transcript_ref: &str) -> Result<EpisodeTranscript, StoreError> {
        let path = self.transcript_path(transcript_ref);
        let text = fs::read_to_string(&path)
            .map_err(|_| StoreError::MissingTranscript(transcript_ref.to_string()))?;
        serde_json::from_str(&text).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }

    /// Configurations present for an orchestrator, with record counts.
    pub fn configs_present(&self, orchestrator_id: &str) -> BTreeMap<ToolConfig, usize> {
        let inner = self.inner.lock().unwrap();
        let mut out = BTreeMap::new();
        for record in inner.records.values() {
            if record.orchestrator_id == orchestrator_id {
                *out.entry(record.config).or_insert(0) += 1;
            }
        }
        out
    }

    /// Distinct orchestrator ids in the store.
    pub fn orchestrators(&self) -> Vec<String> {
        let inner = self.inner.lock().unwrap();
        let mut ids: Vec<String> = inner
            .records
            .values()
            .map(|r| r.orchestrator_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}
