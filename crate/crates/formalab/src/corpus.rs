//! Theorem corpus: loading and validating the line-delimited benchmark file.
//!
//! The on-disk format is one JSON object per line with keys `id`, `domain`,
//! `statement`, `source`. Loading is order-stable and rejects duplicate ids,
//! unknown domain labels, and malformed lines with the offending line number.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mathematical domain of a theorem statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    RealAnalysis,
    ComplexAnalysis,
    Topology,
    Algebra,
}

impl Domain {
    pub const ALL: [Domain; 4] = [
        Domain::RealAnalysis,
        Domain::ComplexAnalysis,
        Domain::Topology,
        Domain::Algebra,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Domain::RealAnalysis => "RealAnalysis",
            Domain::ComplexAnalysis => "ComplexAnalysis",
            Domain::Topology => "Topology",
            Domain::Algebra => "Algebra",
        }
    }

    /// Human-readable name with spaces, as used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Domain::RealAnalysis => "Real Analysis",
            Domain::ComplexAnalysis => "Complex Analysis",
            Domain::Topology => "Topology",
            Domain::Algebra => "Algebra",
        }
    }

    pub fn parse_label(label: &str) -> Option<Domain> {
        match label {
            "RealAnalysis" | "Real Analysis" => Some(Domain::RealAnalysis),
            "ComplexAnalysis" | "Complex Analysis" => Some(Domain::ComplexAnalysis),
            "Topology" => Some(Domain::Topology),
            "Algebra" => Some(Domain::Algebra),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_name())
    }
}

/// One natural-language theorem statement; the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremItem {
    pub id: String,
    pub domain: Domain,
    #[serde(rename = "statement")]
    pub statement_text: String,
    #[serde(rename = "source")]
    pub source_ref: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty corpus")]
    Empty,
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: unknown domain label {label:?}")]
    UnknownDomain { line: usize, label: String },
    #[error("line {line}: field {field:?} must be non-empty")]
    EmptyField { line: usize, field: &'static str },
    #[error("duplicate theorem id {id:?} (lines {first} and {second})")]
    DuplicateId { id: String, first: usize, second: usize },
}

/// An ordered, validated theorem collection with id lookup.
#[derive(Debug, Clone)]
pub struct Corpus {
    items: Vec<TheoremItem>,
    by_id: HashMap<String, usize>,
}

// Raw line shape: domain kept as a string so label errors name the line.
#[derive(Deserialize)]
struct RawRecord {
    id: String,
    domain: String,
    statement: String,
    source: Option<String>,
}

impl Corpus {
    /// Build from items, enforcing id uniqueness and non-empty fields.
    pub fn new(items: Vec<TheoremItem>) -> Result<Self, CorpusError> {
        if items.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut by_id = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if item.id.is_empty() {
                return Err(CorpusError::EmptyField { line: i + 1, field: "id" });
            }
            if item.statement_text.is_empty() {
                return Err(CorpusError::EmptyField { line: i + 1, field: "statement" });
            }
            if let Some(first) = by_id.insert(item.id.clone(), i) {
                return Err(CorpusError::DuplicateId {
                    id: item.id.clone(),
                    first: first + 1,
                    second: i + 1,
                });
            }
        }
        Ok(Corpus { items, by_id })
    }

    /// Load a line-delimited corpus file, preserving file order.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let reader = BufReader::new(file);
        let mut items = Vec::new();
        let mut first_line_of: HashMap<String, usize> = HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                    line: lineno,
                    message: e.to_string(),
                })?;
            let domain = Domain::parse_label(&raw.domain).ok_or(CorpusError::UnknownDomain {
                line: lineno,
                label: raw.domain.clone(),
            })?;
            if raw.id.is_empty() {
                return Err(CorpusError::EmptyField { line: lineno, field: "id" });
            }
            if raw.statement.is_empty() {
                return Err(CorpusError::EmptyField { line: lineno, field: "statement" });
            }
            if let Some(first) = first_line_of.insert(raw.id.clone(), lineno) {
                return Err(CorpusError::DuplicateId { id: raw.id, first, second: lineno });
            }
            items.push(TheoremItem {
                id: raw.id,
                domain,
                statement_text: raw.statement,
                source_ref: raw.source.unwrap_or_default(),
            });
        }
        if items.is_empty() {
            return Err(CorpusError::Empty);
        }
        let by_id = items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.clone(), i))
            .collect();
        Ok(Corpus { items, by_id })
    }

    /// Write as line-delimited JSON, the same format `load` reads.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut out = fs::File::create(path)?;
        for item in &self.items {
            let line = serde_json::to_string(item).expect("theorem items serialize");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn items(&self) -> &[TheoremItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TheoremItem> {
        self.by_id.get(id).map(|&i| &self.items[i])
    }

    pub fn domain_of(&self, id: &str) -> Option<Domain> {
        self.get(id).map(|it| it.domain)
    }

    /// Item count per domain, in a stable order.
    pub fn domain_counts(&self) -> BTreeMap<Domain, usize> {
        let mut counts = BTreeMap::new();
        for item in &self.items {
            *counts.entry(item.domain).or_insert(0) += 1;
        }
        counts
    }
}
