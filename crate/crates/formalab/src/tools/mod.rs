//! The six agent tool endpoints, served by interchangeable backends.
//!
//! A [`ToolBackend`] supplies the three capabilities that differ between
//! deployments: whole-file compilation, the expert drafter endpoint, and web
//! search. Everything else (workspace files, probe generation for symbol
//! queries, fuzzy resolution, argument validation) is backend-independent
//! and lives in [`Toolbelt`].
//!
//! Three backends ship: [`stub::StubBackend`] (a miniature statement checker
//! for desk-scale tests), [`replay::ReplayToolBackend`] (content-addressed
//! fixtures), and [`live::LiveToolBackend`] (pinned toolchain subprocess
//! plus network clients).

pub mod live;
pub mod replay;
pub mod resolve;
pub mod stub;

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::chat::ToolCall;
use crate::config::ToolConfig;
use crate::net::sha256_hex;

pub const TOOL_TRANSLATOR: &str = "lean4_translator";
pub const TOOL_WRITE_FILE: &str = "lean_write_file";
pub const TOOL_REPL: &str = "lean4_repl_runner";
pub const TOOL_INSPECT: &str = "lean_inspect_name";
pub const TOOL_RESOLVE: &str = "lean_resolve_name";
pub const TOOL_SEARCH: &str = "search_online";

/// All six tool names in prompt-block order.
pub const ALL_TOOL_NAMES: [&str; 6] = [
    TOOL_TRANSLATOR,
    TOOL_WRITE_FILE,
    TOOL_REPL,
    TOOL_INSPECT,
    TOOL_RESOLVE,
    TOOL_SEARCH,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

/// One compiler or tool diagnostic, optionally positioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<(u32, u32)>,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Error, message: message.into(), pos: None }
    }

    pub fn warning(message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Warning, message: message.into(), pos: None }
    }

    pub fn info(message: impl Into<String>) -> Self {
        Diagnostic { severity: Severity::Info, message: message.into(), pos: None }
    }

    pub fn at(mut self, line: u32, col: u32) -> Self {
        self.pos = Some((line, col));
        self
    }
}

/// Result of one tool execution, as delivered back to the model.
///
/// `ok = false` means the call itself failed (bad arguments, sandbox refusal,
/// unreachable endpoint); the episode continues either way. A compile that
/// runs to completion with errors is still `ok = true` -- the verdict lives
/// in the report payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutcome {
    pub ok: bool,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl ToolOutcome {
    pub fn ok(payload: impl Into<String>) -> Self {
        ToolOutcome { ok: true, payload: payload.into(), diagnostics: Vec::new() }
    }

    pub fn ok_with(payload: impl Into<String>, diagnostics: Vec<Diagnostic>) -> Self {
        ToolOutcome { ok: true, payload: payload.into(), diagnostics }
    }

    /// A failed outcome always carries at least one diagnostic.
    pub fn err(message: impl Into<String>) -> Self {
        let message = message.into();
        ToolOutcome {
            ok: false,
            payload: json!({ "error": message }).to_string(),
            diagnostics: vec![Diagnostic::error(message)],
        }
    }
}

/// Full elaboration result for one source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompilerReport {
    pub success: bool,
    pub messages: Vec<Diagnostic>,
    pub elapsed_ms: u64,
    /// Library snapshot the file was elaborated against.
    pub snapshot_id: String,
}

impl CompilerReport {
    pub fn has_errors(&self) -> bool {
        self.messages.iter().any(|d| d.severity == Severity::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub required: bool,
    pub kind: ArgKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    String,
    Bool,
    Integer,
    StringList,
}

/// Declared interface of one tool, as advertised to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub argument_schema: Vec<ArgSpec>,
}

fn arg(name: &str, required: bool, kind: ArgKind) -> ArgSpec {
    ArgSpec { name: name.to_string(), required, kind }
}

impl ToolSpec {
    pub fn builtin(name: &str) -> Option<ToolSpec> {
        let (description, schema): (&str, Vec<ArgSpec>) = match name {
            TOOL_TRANSLATOR => (
                "Invokes the fine-tuned Herald translator to generate a draft Lean formalization of the natural-language input.",
                vec![arg("statement", true, ArgKind::String)],
            ),
            TOOL_WRITE_FILE => (
                "Write the full Lean file to the workspace (imports + exactly one final statement).",
                vec![arg("path", true, ArgKind::String), arg("content", true, ArgKind::String)],
            ),
            TOOL_REPL => (
                "Compiles the current Lean file and returns compiler diagnostics (errors, warnings, and success flags).",
                vec![arg("path", false, ArgKind::String), arg("code", false, ArgKind::String)],
            ),
            TOOL_INSPECT => (
                "Checks whether a Mathlib symbol exists and returns its type (#check) and optionally its definition (#print).",
                vec![
                    arg("name", true, ArgKind::String),
                    arg("imports", false, ArgKind::StringList),
                    arg("include_print", false, ArgKind::Bool),
                ],
            ),
            TOOL_RESOLVE => (
                "Performs fuzzy symbol resolution to map informal or incorrect names to valid Mathlib identifiers.",
                vec![
                    arg("token", true, ArgKind::String),
                    arg("namespace_hints", false, ArgKind::StringList),
                    arg("imports", false, ArgKind::StringList),
                    arg("top_k", false, ArgKind::Integer),
                ],
            ),
            TOOL_SEARCH => (
                "Performs external web search to retrieve mathematical or documentation context not present in Mathlib.",
                vec![arg("query", true, ArgKind::String)],
            ),
            _ => return None,
        };
        Some(ToolSpec {
            name: name.to_string(),
            description: description.to_string(),
            argument_schema: schema,
        })
    }
}

/// Tool names active under a configuration. `lean_write_file` is workspace
/// plumbing present in every agent configuration; the baseline has no tools.
pub fn active_tool_names(config: ToolConfig) -> Vec<&'static str> {
    if config.is_baseline() {
        return Vec::new();
    }
    let mut names = Vec::new();
    if config.translator {
        names.push(TOOL_TRANSLATOR);
    }
    names.push(TOOL_WRITE_FILE);
    if config.feedback {
        names.push(TOOL_REPL);
    }
    if config.search {
        names.push(TOOL_INSPECT);
        names.push(TOOL_RESOLVE);
        names.push(TOOL_SEARCH);
    }
    names
}

/// Tool specs advertised to the model for a configuration.
pub fn specs_for_config(config: ToolConfig) -> Vec<ToolSpec> {
    active_tool_names(config)
        .into_iter()
        .map(|n| ToolSpec::builtin(n).expect("builtin names have specs"))
        .collect()
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("toolchain configuration error: {0}")]
    Configuration(String),
    #[error("replay fixture miss for key {key}")]
    FixtureMiss { key: String },
    #[error("compile timed out after {0} ms")]
    Timeout(u64),
    #[error("workspace I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A known symbol with its type signature and optional definition text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolEntry {
    pub name: String,
    pub signature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub definition: Option<String>,
}

/// Name table backing `#check`/`#print` probes and fuzzy resolution.
#[derive(Debug, Clone, Default)]
pub struct SymbolIndex {
    entries: Vec<SymbolEntry>,
    by_name: HashMap<String, usize>,
}

impl SymbolIndex {
    pub fn new(entries: Vec<SymbolEntry>) -> Self {
        let by_name = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
        SymbolIndex { entries, by_name }
    }

    pub fn lookup(&self, name: &str) -> Option<&SymbolEntry> {
        self.by_name.get(name).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[SymbolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Backend-specific capabilities: compilation, drafting, web search.
///
/// Recoverable per-call failures (unreachable endpoint, provider 5xx) are
/// `Ok` outcomes with `ok = false`; `Err` is reserved for configuration
/// problems and replay fixture misses, which abort the episode.
pub trait ToolBackend: Send + Sync {
    fn snapshot_id(&self) -> &str;
    fn compile(&self, content: &str) -> Result<CompilerReport, ToolError>;
    fn herald_draft(&self, statement: &str) -> Result<ToolOutcome, ToolError>;
    fn web_search(&self, query: &str) -> Result<ToolOutcome, ToolError>;
    fn symbol_index(&self) -> &SymbolIndex;
}

struct PoolState {
    available: usize,
}

/// Bounded pool of compiler sessions with a content-addressed report cache.
///
/// A cached report is served only when both the content hash and the
/// snapshot id match, so stale fixtures can never leak across snapshots.
pub struct SessionPool {
    backend: Arc<dyn ToolBackend>,
    capacity: usize,
    state: Mutex<PoolState>,
    idle: Condvar,
    cache: Mutex<HashMap<(String, String), CompilerReport>>,
}

impl SessionPool {
    pub fn new(backend: Arc<dyn ToolBackend>, sessions: usize) -> Arc<Self> {
        let sessions = sessions.max(1);
        Arc::new(SessionPool {
            backend,
            capacity: sessions,
            state: Mutex::new(PoolState { available: sessions }),
            idle: Condvar::new(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn backend(&self) -> &dyn ToolBackend {
        self.backend.as_ref()
    }

    /// Compile `content`, serving cache hits for identical (content, snapshot).
    pub fn compile(&self, content: &str) -> Result<CompilerReport, ToolError> {
        let key = (sha256_hex(content.as_bytes()), self.backend.snapshot_id().to_string());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let _permit = self.acquire();
        let report = self.backend.compile(content)?;
        self.cache.lock().unwrap().insert(key, report.clone());
        Ok(report)
    }

    fn acquire(&self) -> PoolPermit<'_> {
        let mut state = self.state.lock().unwrap();
        while state.available == 0 {
            state = self.idle.wait(state).unwrap();
        }
        state.available -= 1;
        PoolPermit { pool: self }
    }
}

struct PoolPermit<'a> {
    pool: &'a SessionPool,
}

impl Drop for PoolPermit<'_> {
    fn drop(&mut self) {
        let mut state = self.pool.state.lock().unwrap();
        state.available += 1;
        self.pool.idle.notify_one();
    }
}

/// Default candidate count for fuzzy resolution when `top_k` is omitted.
pub const DEFAULT_RESOLVE_TOP_K: usize = 8;

/// Per-episode tool session: dispatches calls, owns the workspace directory,
/// and tracks the last written file for parameterless compile runs.
pub struct Toolbelt {
    pool: Arc<SessionPool>,
    workspace: PathBuf,
    config: ToolConfig,
    resolve_top_k: usize,
    last_written: Option<(String, String)>,
}

impl Toolbelt {
    pub fn new(pool: Arc<SessionPool>, workspace: PathBuf, config: ToolConfig) -> Self {
        Toolbelt {
            pool,
            workspace,
            config,
            resolve_top_k: DEFAULT_RESOLVE_TOP_K,
            last_written: None,
        }
    }

    pub fn config(&self) -> ToolConfig {
        self.config
    }

    pub fn workspace(&self) -> &Path {
        &self.workspace
    }

    /// Content of the most recent successful `lean_write_file`, if any.
    pub fn last_written_content(&self) -> Option<&str> {
        self.last_written.as_ref().map(|(_, c)| c.as_str())
    }

    pub fn pool(&self) -> &Arc<SessionPool> {
        &self.pool
    }

    /// Execute one tool call. Recoverable problems (inactive tool, malformed
    /// arguments, missing file) become error outcomes so the repair loop
    /// continues; `Err` aborts the episode.
    pub fn execute(&mut self, call: &ToolCall) -> Result<ToolOutcome, ToolError> {
        let active = active_tool_names(self.config);
        if !active.contains(&call.tool_name.as_str()) {
            let known = ALL_TOOL_NAMES.contains(&call.tool_name.as_str());
            let reason = if known { "not available in this configuration" } else { "unknown tool" };
            return Ok(ToolOutcome::err(format!("tool {:?} is {reason}", call.tool_name)));
        }
        let args = match call.arguments.as_object() {
            Some(map) => map.clone(),
            None => return Ok(ToolOutcome::err("tool arguments must be a JSON object")),
        };
        match call.tool_name.as_str() {
            TOOL_WRITE_FILE => Ok(self.write_file(&args)),
            TOOL_REPL => self.repl_run(&args),
            TOOL_INSPECT => self.inspect(&args),
            TOOL_RESOLVE => self.resolve_name(&args),
            TOOL_TRANSLATOR => self.translate(&args),
            TOOL_SEARCH => self.search(&args),
            _ => unreachable!("active names are a subset of builtins"),
        }
    }

    fn write_file(&mut self, args: &serde_json::Map<String, Value>) -> ToolOutcome {
        let Some(path) = str_arg(args, "path") else {
            return ToolOutcome::err("lean_write_file requires a string \"path\"");
        };
        let Some(content) = str_arg(args, "content") else {
            return ToolOutcome::err("lean_write_file requires a string \"content\"");
        };
        let rel = match sandboxed_path(path) {
            Ok(rel) => rel,
            Err(reason) => return ToolOutcome::err(format!("refusing to write {path:?}: {reason}")),
        };
        let full = self.workspace.join(&rel);
        if let Some(parent) = full.parent() {
            if let Err(e) = std::fs::create_dir_all(parent) {
                return ToolOutcome::err(format!("cannot create workspace directory: {e}"));
            }
        }
        if let Err(e) = std::fs::write(&full, content.as_bytes()) {
            return ToolOutcome::err(format!("write failed: {e}"));
        }
        self.last_written = Some((path.to_string(), content.to_string()));
        ToolOutcome::ok(
            json!({ "path": path, "bytes": content.len() }).to_string(),
        )
    }

    fn repl_run(&mut self, args: &serde_json::Map<String, Value>) -> Result<ToolOutcome, ToolError> {
        // Path form preferred; inline code and the parameterless "current
        // file" form are accepted. The inline form is marked in the outcome
        // so audits can spot it.
        let mut inline_note = None;
        let content: String = if let Some(path) = str_arg(args, "path") {
            let rel = match sandboxed_path(path) {
                Ok(rel) => rel,
                Err(reason) => {
                    return Ok(ToolOutcome::err(format!("refusing to read {path:?}: {reason}")))
                }
            };
            match std::fs::read_to_string(self.workspace.join(&rel)) {
                Ok(content) => content,
                Err(_) => {
                    return Ok(ToolOutcome::err(format!(
                        "no such file in workspace: {path:?} (write it first)"
                    )))
                }
            }
        } else if let Some(code) = str_arg(args, "code") {
            inline_note = Some(Diagnostic::info("compiled from inline code argument"));
            code.to_string()
        } else if let Some((_, content)) = &self.last_written {
            content.clone()
        } else {
            return Ok(ToolOutcome::err(
                "nothing to compile: pass \"path\" or write a file first",
            ));
        };

        match self.pool.compile(&content) {
            Ok(report) => {
                let mut diagnostics = report.messages.clone();
                if let Some(note) = inline_note {
                    diagnostics.push(note);
                }
                let payload =
                    serde_json::to_string(&report).expect("compiler reports serialize");
                Ok(ToolOutcome { ok: true, payload, diagnostics })
            }
            Err(ToolError::Timeout(ms)) => Ok(ToolOutcome {
                ok: false,
                payload: json!({ "error": "compile timed out", "timeout_ms": ms }).to_string(),
                diagnostics: vec![Diagnostic::error(format!("compile timed out after {ms} ms"))],
            }),
            Err(other) => Err(other),
        }
    }

    fn inspect(&self, args: &serde_json::Map<String, Value>) -> Result<ToolOutcome, ToolError> {
        let Some(name) = str_arg(args, "name") else {
            return Ok(ToolOutcome::err("lean_inspect_name requires a string \"name\""));
        };
        if !is_plausible_identifier(name) {
            return Ok(ToolOutcome::err(format!("{name:?} is not a plausible identifier")));
        }
        let include_print = args.get("include_print").and_then(Value::as_bool).unwrap_or(false);
        let imports = string_list(args, "imports");

        let mut probe = String::from("import Mathlib\n");
        for import in &imports {
            probe.push_str(&format!("import {import}\n"));
        }
        probe.push_str(&format!("#check {name}\n"));
        if include_print {
            probe.push_str(&format!("#print {name}\n"));
        }

        let report = self.pool.compile(&probe)?;
        let exists = !report
            .messages
            .iter()
            .any(|d| d.severity == Severity::Error && d.message.contains(name));
        let signature = report.messages.iter().find_map(|d| {
            (d.severity == Severity::Info && d.message.starts_with(&format!("{name} :")))
                .then(|| d.message.clone())
        });
        let definition = include_print.then(|| {
            report.messages.iter().find_map(|d| {
                (d.severity == Severity::Info && d.message.starts_with("def "))
                    .then(|| d.message.clone())
            })
        }).flatten();
        let payload = json!({
            "name": name,
            "exists": exists,
            "signature": signature,
            "definition": definition,
        });
        Ok(ToolOutcome::ok_with(payload.to_string(), report.messages))
    }

    fn resolve_name(&self, args: &serde_json::Map<String, Value>) -> Result<ToolOutcome, ToolError> {
        let Some(token) = str_arg(args, "token") else {
            return Ok(ToolOutcome::err("lean_resolve_name requires a string \"token\""));
        };
        if token.is_empty() {
            return Ok(ToolOutcome::err("token must be non-empty"));
        }
        let top_k = match args.get("top_k") {
            None => self.resolve_top_k,
            Some(v) => match v.as_u64() {
                Some(k) if k >= 1 => k as usize,
                _ => return Ok(ToolOutcome::err("top_k must be a positive integer")),
            },
        };
        let hints = string_list(args, "namespace_hints");
        let index = self.pool.backend().symbol_index();
        if index.is_empty() {
            return Err(ToolError::Configuration("symbol index is empty".into()));
        }
        let candidates = resolve::rank(index, token, &hints, top_k);
        let payload = json!({
            "token": token,
            "candidates": candidates
                .iter()
                .map(|c| json!({ "name": c.name, "signature": c.signature, "score": c.score }))
                .collect::<Vec<_>>(),
        });
        Ok(ToolOutcome::ok(payload.to_string()))
    }

    fn translate(&self, args: &serde_json::Map<String, Value>) -> Result<ToolOutcome, ToolError> {
        let Some(statement) = str_arg(args, "statement") else {
            return Ok(ToolOutcome::err("lean4_translator requires a string \"statement\""));
        };
        self.pool.backend().herald_draft(statement)
    }

    fn search(&self, args: &serde_json::Map<String, Value>) -> Result<ToolOutcome, ToolError> {
        let Some(query) = str_arg(args, "query") else {
            return Ok(ToolOutcome::err("search_online requires a string \"query\""));
        };
        if query.trim().is_empty() {
            return Ok(ToolOutcome::err("query must be non-empty"));
        }
        self.pool.backend().web_search(query)
    }
}

fn str_arg<'a>(args: &'a serde_json::Map<String, Value>, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn string_list(args: &serde_json::Map<String, Value>, key: &str) -> Vec<String> {
    args.get(key)
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Validate a workspace-relative path: no absolute paths, no parent escapes.
fn sandboxed_path(path: &str) -> Result<PathBuf, &'static str> {
    if path.is_empty() {
        return Err("empty path");
    }
    let p = Path::new(path);
    if p.is_absolute() {
        return Err("outside workspace (absolute path)");
    }
    let mut clean = PathBuf::new();
    for comp in p.components() {
        match comp {
            Component::Normal(c) => clean.push(c),
            Component::CurDir => {}
            _ => return Err("outside workspace"),
        }
    }
    if clean.as_os_str().is_empty() {
        return Err("empty path");
    }
    Ok(clean)
}

fn is_plausible_identifier(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '.' | '_' | '\'' | '!' | '?'))
        && !name.starts_with('.')
        && !name.ends_with('.')
}
