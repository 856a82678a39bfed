//! Miniature statement checker for desk-scale tests.
//!
//! Stands in for the real toolchain with a small symbol table and three
//! rules: the file must start with `import Mathlib`, contain exactly one
//! theorem ending in `:= by sorry`, and reference only known symbols.
//! Files consisting of `#check`/`#print` probes skip the theorem rule and
//! answer from the table, the same shape the live compiler produces.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::json;

use super::{
    CompilerReport, Diagnostic, Severity, SymbolEntry, SymbolIndex, ToolBackend, ToolError,
    ToolOutcome,
};
use crate::net::sha256_hex;

pub const STUB_SNAPSHOT_ID: &str = "stub-mathlib-v1";

const REQUIRED_IMPORT: &str = "import Mathlib";

/// Deterministic offline backend around the miniature checker.
pub struct StubBackend {
    index: SymbolIndex,
    snapshot: String,
}

impl StubBackend {
    pub fn new(index: SymbolIndex) -> Self {
        StubBackend { index, snapshot: STUB_SNAPSHOT_ID.to_string() }
    }

    /// Backend with the built-in symbol table.
    pub fn with_default_table() -> Self {
        Self::new(default_symbol_index())
    }

    pub fn with_snapshot(mut self, snapshot: impl Into<String>) -> Self {
        self.snapshot = snapshot.into();
        self
    }
}

/// The built-in symbol table: a handful of real library names, enough to
/// exercise probes, resolution, and the unknown-identifier path.
pub fn default_symbol_index() -> SymbolIndex {
    let entry = |name: &str, sig: &str, def: Option<&str>| SymbolEntry {
        name: name.to_string(),
        signature: sig.to_string(),
        definition: def.map(str::to_string),
    };
    SymbolIndex::new(vec![
        entry(
            "Polynomial.natDegree",
            "Polynomial.natDegree : Polynomial R → ℕ",
            Some("def Polynomial.natDegree : Polynomial R → ℕ := fun p => (p.degree).unbot' 0"),
        ),
        entry("Polynomial.eval", "Polynomial.eval : R → Polynomial R → R", None),
        entry("Polynomial.degree", "Polynomial.degree : Polynomial R → WithBot ℕ", None),
        entry("Polynomial", "Polynomial : Type u → Type u", None),
        entry("Continuous", "Continuous : (α → β) → Prop", None),
        entry("ContinuousOn", "ContinuousOn : (α → β) → Set α → Prop", None),
        entry("Differentiable", "Differentiable : 𝕜 → (E → F) → Prop", None),
        entry("IsCompact", "IsCompact : Set α → Prop", None),
        entry("IsClosed", "IsClosed : Set α → Prop", None),
        entry("IsOpen", "IsOpen : Set α → Prop", None),
        entry("Metric.ball", "Metric.ball : α → ℝ → Set α", None),
        entry("Filter.Tendsto", "Filter.Tendsto : (α → β) → Filter α → Filter β → Prop", None),
        entry("Real.sqrt", "Real.sqrt : ℝ → ℝ", None),
        entry("Complex.abs", "Complex.abs : ℂ →*₀ ℝ", None),
        entry("Finset.sum", "Finset.sum : Finset α → (α → β) → β", None),
        entry("Set.Finite", "Set.Finite : Set α → Prop", None),
        entry("Group", "Group : Type u → Type u", None),
        entry("CommRing", "CommRing : Type u → Type u", None),
        entry("Field", "Field : Type u → Type u", None),
        entry("Nat.Prime", "Nat.Prime : ℕ → Prop", None),
        entry("Matrix", "Matrix : Type u → Type v → Type w → Type (max u v w)", None),
    ])
}

fn capitalized_ident_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b[A-Z][A-Za-z0-9_']*(?:\.[A-Za-z0-9_']+)*\b").expect("valid regex")
    })
}

impl StubBackend {
    fn check_probe(&self, lines: &[(usize, &str)]) -> Vec<Diagnostic> {
        let mut messages = Vec::new();
        for (lineno, line) in lines {
            let line = line.trim();
            if let Some(name) = line.strip_prefix("#check ") {
                let name = name.trim();
                match self.index.lookup(name) {
                    Some(entry) => messages.push(Diagnostic::info(entry.signature.clone())),
                    None => messages.push(
                        Diagnostic::error(format!("unknown identifier '{name}'"))
                            .at(*lineno as u32, 7),
                    ),
                }
            } else if let Some(name) = line.strip_prefix("#print ") {
                let name = name.trim();
                match self.index.lookup(name) {
                    Some(entry) => {
                        let def = entry
                            .definition
                            .clone()
                            .unwrap_or_else(|| format!("def {name} := <opaque>"));
                        messages.push(Diagnostic::info(def));
                    }
                    None => messages.push(
                        Diagnostic::error(format!("unknown identifier '{name}'"))
                            .at(*lineno as u32, 7),
                    ),
                }
            }
        }
        messages
    }

    fn check_statement(&self, content: &str, lines: &[(usize, &str)]) -> Vec<Diagnostic> {
        let mut messages = Vec::new();

        let theorem_count = lines
            .iter()
            .filter(|(_, l)| {
                let t = l.trim_start();
                t.starts_with("theorem ") || t.starts_with("lemma ")
            })
            .count();
        if theorem_count == 0 {
            messages.push(Diagnostic::error("no theorem statement found"));
        } else if theorem_count > 1 {
            messages.push(Diagnostic::error(format!(
                "expected exactly one theorem statement, found {theorem_count}"
            )));
        }
        if !content.trim_end().ends_with(":= by sorry") {
            messages.push(Diagnostic::error("final statement must end with ':= by sorry'"));
        }

        // Every capitalized (possibly dotted) identifier outside the import
        // lines must be in the table.
        for (lineno, line) in lines {
            if line.trim_start().starts_with("import ") || line.trim_start().starts_with("--") {
                continue;
            }
            for m in capitalized_ident_re().find_iter(line) {
                let name = m.as_str();
                if self.index.lookup(name).is_none() {
                    messages.push(
                        Diagnostic::error(format!("unknown identifier '{name}'"))
                            .at(*lineno as u32, m.start() as u32),
                    );
                }
            }
        }

        if content.contains("sorry") {
            messages.push(Diagnostic::warning("declaration uses 'sorry'"));
        }
        messages
    }
}

impl ToolBackend for StubBackend {
    fn snapshot_id(&self) -> &str {
        &self.snapshot
    }

    fn compile(&self, content: &str) -> Result<CompilerReport, ToolError> {
        let mut messages = Vec::new();
        let lines: Vec<(usize, &str)> = content
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();

        if lines.is_empty() {
            messages.push(Diagnostic::error("empty file: nothing to elaborate"));
        } else {
            if lines[0].1.trim() != REQUIRED_IMPORT {
                messages.push(
                    Diagnostic::error(format!("file must start with '{REQUIRED_IMPORT}'")).at(1, 0),
                );
            }
            let is_probe = lines
                .iter()
                .any(|(_, l)| l.trim_start().starts_with("#check") || l.trim_start().starts_with("#print"));
            if is_probe {
                messages.extend(self.check_probe(&lines));
            } else {
                messages.extend(self.check_statement(content, &lines));
            }
        }

        let success = !messages.iter().any(|d| d.severity == Severity::Error);
        Ok(CompilerReport {
            success,
            messages,
            elapsed_ms: 1,
            snapshot_id: self.snapshot.clone(),
        })
    }

    fn herald_draft(&self, statement: &str) -> Result<ToolOutcome, ToolError> {
        // Deterministic draft keyed by the statement; shaped like a real
        // drafter response the orchestrator may edit or ignore.
        let tag = &sha256_hex(statement.as_bytes())[..8];
        let draft = format!(
            "import Mathlib\n\ntheorem draft_{tag} : 1 + 1 = 2 := by sorry\n"
        );
        Ok(ToolOutcome::ok(json!({ "draft": draft }).to_string()))
    }

    fn web_search(&self, query: &str) -> Result<ToolOutcome, ToolError> {
        let results = json!([{
            "title": format!("Reference entry for {query}"),
            "snippet": "Canned offline search result.",
            "url": format!("https://example.invalid/search?q={}", query.replace(' ', "+")),
        }]);
        Ok(ToolOutcome::ok(results.to_string()))
    }

    fn symbol_index(&self) -> &SymbolIndex {
        &self.index
    }
}

/// A stub-valid statement file for the given theorem name.
pub fn valid_statement_file(theorem_id: &str) -> String {
    format!("import Mathlib\n\ntheorem {theorem_id} : 1 + 1 = 2 := by sorry\n")
}
