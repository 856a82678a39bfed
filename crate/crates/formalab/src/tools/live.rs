//! Live backend: pinned toolchain subprocess for compilation plus network
//! clients for the drafter endpoint and web search.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde_json::json;

use super::{
    CompilerReport, Diagnostic, Severity, SymbolEntry, SymbolIndex, ToolBackend, ToolError,
    ToolOutcome,
};
use crate::net::count_network_op;

/// Default compile timeout per run.
pub const DEFAULT_COMPILE_TIMEOUT_MS: u64 = 120_000;

#[derive(Debug, Clone)]
pub struct LiveToolConfig {
    /// Command that elaborates one file, e.g. `["lake", "env", "lean"]`;
    /// the file path is appended as the final argument.
    pub compile_command: Vec<String>,
    /// Directory the command runs in (the toolchain project root).
    pub compile_workdir: Option<PathBuf>,
    /// Pinned library snapshot identifier recorded in every report.
    pub snapshot_id: String,
    pub compile_timeout_ms: u64,
    /// Drafter endpoint URL; unset means the drafter degrades to an error outcome.
    pub herald_url: Option<String>,
    /// Search provider URL receiving `{"query": ...}`.
    pub search_url: Option<String>,
    /// Newline-separated `name<TAB>signature` symbol dump for resolution.
    pub symbols_path: Option<PathBuf>,
}

impl Default for LiveToolConfig {
    fn default() -> Self {
        LiveToolConfig {
            compile_command: vec!["lake".into(), "env".into(), "lean".into()],
            compile_workdir: None,
            snapshot_id: "unpinned-snapshot".into(),
            compile_timeout_ms: DEFAULT_COMPILE_TIMEOUT_MS,
            herald_url: None,
            search_url: None,
            symbols_path: None,
        }
    }
}

pub struct LiveToolBackend {
    config: LiveToolConfig,
    index: SymbolIndex,
    scratch: PathBuf,
}

impl LiveToolBackend {
    pub fn new(config: LiveToolConfig) -> Result<Self, ToolError> {
        if config.compile_command.is_empty() {
            return Err(ToolError::Configuration("compile command is empty".into()));
        }
        let index = match &config.symbols_path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ToolError::Configuration(format!(
                        "cannot read symbol dump {}: {e}",
                        path.display()
                    ))
                })?;
                let entries = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| {
                        let (name, sig) = l.split_once('\t').unwrap_or((l, ""));
                        SymbolEntry {
                            name: name.trim().to_string(),
                            signature: if sig.is_empty() {
                                name.trim().to_string()
                            } else {
                                sig.trim().to_string()
                            },
                            definition: None,
                        }
                    })
                    .collect();
                SymbolIndex::new(entries)
            }
            None => SymbolIndex::default(),
        };
        let scratch = std::env::temp_dir().join(format!("toolchain-scratch-{}", std::process::id()));
        std::fs::create_dir_all(&scratch)?;
        Ok(LiveToolBackend { config, index, scratch })
    }
}

fn diag_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Toolchain diagnostic shape: path:line:col: severity: message
    RE.get_or_init(|| {
        Regex::new(r"^(?P<path>[^:]+):(?P<line>\d+):(?P<col>\d+):\s*(?P<sev>error|warning|info):\s*(?P<msg>.*)$")
            .expect("valid regex")
    })
}

/// Parse toolchain output into diagnostics. Lines that do not open a new
/// diagnostic continue the previous message.
pub fn parse_diagnostics(output: &str) -> Vec<Diagnostic> {
    let mut out: Vec<Diagnostic> = Vec::new();
    for line in output.lines() {
        if let Some(caps) = diag_line_re().captures(line) {
            let severity = match &caps["sev"] {
                "error" => Severity::Error,
                "warning" => Severity::Warning,
                _ => Severity::Info,
            };
            let lineno: u32 = caps["line"].parse().unwrap_or(0);
            let col: u32 = caps["col"].parse().unwrap_or(0);
            out.push(Diagnostic {
                severity,
                message: caps["msg"].to_string(),
                pos: Some((lineno, col)),
            });
        } else if let Some(last) = out.last_mut() {
            if !line.trim().is_empty() {
                last.message.push('\n');
                last.message.push_str(line);
            }
        }
    }
    out
}

fn wait_with_timeout(
    child: &mut std::process::Child,
    timeout: Duration,
) -> std::io::Result<Option<std::process::ExitStatus>> {
    let start = Instant::now();
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        if start.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(None);
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

impl ToolBackend for LiveToolBackend {
    fn snapshot_id(&self) -> &str {
        &self.config.snapshot_id
    }

    fn compile(&self, content: &str) -> Result<CompilerReport, ToolError> {
        let file = self
            .scratch
            .join(format!("probe-{}.lean", crate::net::sha256_hex(content.as_bytes())));
        std::fs::write(&file, content)?;

        let started = Instant::now();
        let (program, rest) = self
            .config
            .compile_command
            .split_first()
            .expect("checked non-empty at construction");
        let mut cmd = Command::new(program);
        cmd.args(rest)
            .arg(&file)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .stdin(Stdio::null());
        if let Some(dir) = &self.config.compile_workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd.spawn().map_err(|e| {
            ToolError::Configuration(format!("cannot launch toolchain {program:?}: {e}"))
        })?;

        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let reader = std::thread::spawn(move || {
            let mut out = String::new();
            let mut err = String::new();
            let _ = stdout.read_to_string(&mut out);
            let _ = stderr.read_to_string(&mut err);
            (out, err)
        });

        let status = wait_with_timeout(&mut child, Duration::from_millis(self.config.compile_timeout_ms))?;
        let (out, err) = reader.join().unwrap_or_default();
        let Some(status) = status else {
            return Err(ToolError::Timeout(self.config.compile_timeout_ms));
        };

        let mut messages = parse_diagnostics(&out);
        messages.extend(parse_diagnostics(&err));
        let success = status.success() && !messages.iter().any(|d| d.severity == Severity::Error);
        Ok(CompilerReport {
            success,
            messages,
            elapsed_ms: started.elapsed().as_millis() as u64,
            snapshot_id: self.config.snapshot_id.clone(),
        })
    }

    fn herald_draft(&self, statement: &str) -> Result<ToolOutcome, ToolError> {
        let Some(url) = &self.config.herald_url else {
            return Ok(ToolOutcome::err("drafter endpoint is not configured"));
        };
        count_network_op();
        let client = reqwest::blocking::Client::new();
        let response = client
            .post(url)
            .json(&json!({ "statement": statement }))
            .timeout(Duration::from_secs(60))
            .send();
        match response.and_then(|r| r.error_for_status()) {
            Ok(resp) => match resp.text() {
                Ok(body) => Ok(ToolOutcome::ok(body)),
                Err(e) => Ok(ToolOutcome::err(format!("drafter response unreadable: {e}"))),
            },
            // Degraded mode: the episode continues without a draft.
            Err(e) => Ok(ToolOutcome::err(format!("drafter endpoint unreachable: {e}"))),
        }
    }

    fn web_search(&self, query: &str) -> Result<ToolOutcome, ToolError> {
        let Some(url) = &self.config.search_url else {
            return Ok(ToolOutcome::err("search provider is not configured"));
        };
        count_network_op();
        let client = reqwest::blocking::Client::new();
        let response = client
            .post(url)
            .json(&json!({ "query": query }))
            .timeout(Duration::from_secs(30))
            .send();
        match response.and_then(|r| r.error_for_status()) {
            Ok(resp) => match resp.text() {
                Ok(body) => Ok(ToolOutcome::ok(body)),
                Err(e) => Ok(ToolOutcome::err(format!("search response unreadable: {e}"))),
            },
            Err(e) => Ok(ToolOutcome::err(format!("search provider error: {e}"))),
        }
    }

    fn symbol_index(&self) -> &SymbolIndex {
        &self.index
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::os::unix::fs::PermissionsExt;

    #[test]
    fn parses_toolchain_diagnostics_with_continuations() {
        let output = "\
probe.lean:3:10: error: unknown identifier 'Polynomial.IsConstant'
probe.lean:5:0: warning: declaration uses 'sorry'
probe.lean:7:2: error: type mismatch
  expected ℕ
  got ℝ
";
        let diags = parse_diagnostics(output);
        assert_eq!(diags.len(), 3);
        assert_eq!(diags[0].severity, Severity::Error);
        assert_eq!(diags[0].pos, Some((3, 10)));
        assert!(diags[2].message.contains("expected ℕ"));
    }

    // Exercise the subprocess harness against a fake toolchain script.
    fn fake_toolchain(dir: &std::path::Path, body: &str) -> PathBuf {
        let path = dir.join("fake-lean.sh");
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        let mut perm = std::fs::metadata(&path).unwrap().permissions();
        perm.set_mode(0o755);
        std::fs::set_permissions(&path, perm).unwrap();
        path
    }

    #[test]
    fn subprocess_success_with_sorry_warning() {
        let dir = tempfile::tempdir().unwrap();
        let script = fake_toolchain(
            dir.path(),
            r#"echo "$1:2:0: warning: declaration uses 'sorry'"; exit 0"#,
        );
        let backend = LiveToolBackend::new(LiveToolConfig {
            compile_command: vec![script.display().to_string()],
            snapshot_id: "pinned-test".into(),
            ..Default::default()
        })
        .unwrap();
        let report = backend.compile("import Mathlib\ntheorem t : 1 = 1 := by sorry").unwrap();
        assert!(report.success);
        assert_eq!(report.snapshot_id, "pinned-test");
        assert_eq!(report.messages.len(), 1);
        assert_eq!(report.messages[0].severity, Severity::Warning);
    }

    #[test]
    fn subprocess_failure_surfaces_errors() {
        let dir = tempfile::tempdir().unwrap();
        let script = fake_toolchain(
            dir.path(),
            r#"echo "$1:1:0: error: unknown identifier 'Foo'"; exit 1"#,
        );
        let backend = LiveToolBackend::new(LiveToolConfig {
            compile_command: vec![script.display().to_string()],
            ..Default::default()
        })
        .unwrap();
        let report = backend.compile("garbage").unwrap();
        assert!(!report.success);
        assert!(report.messages[0].message.contains("unknown identifier"));
    }

    #[test]
    fn subprocess_timeout_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let script = fake_toolchain(dir.path(), "sleep 5");
        let backend = LiveToolBackend::new(LiveToolConfig {
            compile_command: vec![script.display().to_string()],
            compile_timeout_ms: 120,
            ..Default::default()
        })
        .unwrap();
        match backend.compile("x") {
            Err(ToolError::Timeout(ms)) => assert_eq!(ms, 120),
            other => panic!("expected timeout, got {other:?}"),
        }
    }

    #[test]
    fn missing_toolchain_is_a_configuration_error() {
        let backend = LiveToolBackend::new(LiveToolConfig {
            compile_command: vec!["/definitely/not/a/toolchain".into()],
            ..Default::default()
        })
        .unwrap();
        match backend.compile("x") {
            Err(ToolError::Configuration(_)) => {}
            other => panic!("expected configuration error, got {other:?}"),
        }
    }
}
