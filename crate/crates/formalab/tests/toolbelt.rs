//! Toolbelt integration: workspace sandboxing, probe-backed symbol queries,
//! compile caching, and the record/replay backend equivalence contract.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::json;

use formalab::chat::ToolCall;
use formalab::config::ToolConfig;
use formalab::tools::replay::{RecordingToolBackend, ReplayToolBackend};
use formalab::tools::stub::StubBackend;
use formalab::tools::{
    CompilerReport, SessionPool, SymbolIndex, ToolBackend, ToolError, ToolOutcome, Toolbelt,
};

fn call(id: &str, tool: &str, arguments: serde_json::Value) -> ToolCall {
    ToolCall { call_id: id.into(), tool_name: tool.into(), arguments }
}

fn full_toolbelt(workspace: &std::path::Path) -> Toolbelt {
    let pool = SessionPool::new(Arc::new(StubBackend::with_default_table()), 2);
    Toolbelt::new(pool, workspace.to_path_buf(), "111".parse().unwrap())
}

const VALID: &str = "import Mathlib\n\ntheorem t : 1 + 1 = 2 := by sorry\n";

#[test]
fn write_round_trips_bytes_and_reports_count() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let out = belt
        .execute(&call("c1", "lean_write_file", json!({"path": "f.lean", "content": VALID})))
        .unwrap();
    assert!(out.ok);
    let payload: serde_json::Value = serde_json::from_str(&out.payload).unwrap();
    assert_eq!(payload["bytes"], json!(VALID.len()));
    let written = std::fs::read(dir.path().join("f.lean")).unwrap();
    assert_eq!(written, VALID.as_bytes());
}

#[test]
fn path_escape_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let out = belt
        .execute(&call("c1", "lean_write_file", json!({"path": "../x.lean", "content": "y"})))
        .unwrap();
    assert!(!out.ok);
    assert!(out.payload.contains("outside workspace"));
    assert!(!dir.path().parent().unwrap().join("x.lean").exists());
}

#[test]
fn compile_sees_latest_write() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let broken = "import Mathlib\n\ntheorem t : Unknown.Thing := by sorry";
    belt.execute(&call("c1", "lean_write_file", json!({"path": "f.lean", "content": broken})))
        .unwrap();
    belt.execute(&call("c2", "lean_write_file", json!({"path": "f.lean", "content": VALID})))
        .unwrap();
    let out = belt
        .execute(&call("c3", "lean4_repl_runner", json!({"path": "f.lean"})))
        .unwrap();
    let report: CompilerReport = serde_json::from_str(&out.payload).unwrap();
    assert!(report.success, "latest content must win: {:?}", report.messages);
}

#[test]
fn repl_missing_file_is_recoverable() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let out = belt
        .execute(&call("c1", "lean4_repl_runner", json!({"path": "nope.lean"})))
        .unwrap();
    assert!(!out.ok);
    assert!(out.payload.contains("write it first"));
}

#[test]
fn inline_code_form_is_accepted_and_marked() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let out = belt
        .execute(&call("c1", "lean4_repl_runner", json!({"code": VALID})))
        .unwrap();
    assert!(out.ok);
    assert!(out
        .diagnostics
        .iter()
        .any(|d| d.message.contains("inline code argument")));
}

#[test]
fn resolve_finds_close_candidate_with_wire_field_names() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let out = belt
        .execute(&call(
            "c1",
            "lean_resolve_name",
            json!({"token": "natDegre", "namespace_hints": ["Polynomial"], "top_k": 3}),
        ))
        .unwrap();
    assert!(out.ok);
    let payload: serde_json::Value = serde_json::from_str(&out.payload).unwrap();
    assert_eq!(payload["candidates"][0]["name"], json!("Polynomial.natDegree"));
    assert_eq!(payload["candidates"].as_array().unwrap().len(), 3);

    let rejected = belt
        .execute(&call("c2", "lean_resolve_name", json!({"token": "x", "top_k": 0})))
        .unwrap();
    assert!(!rejected.ok);
}

#[test]
fn search_empty_query_rejected_nonempty_served() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let empty = belt
        .execute(&call("c1", "search_online", json!({"query": "  "})))
        .unwrap();
    assert!(!empty.ok);
    let ok = belt
        .execute(&call("c2", "search_online", json!({"query": "intermediate value theorem"})))
        .unwrap();
    assert!(ok.ok);
    assert!(ok.payload.contains("title"));
}

#[test]
fn translator_draft_mentions_theorem() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let out = belt
        .execute(&call(
            "c1",
            "lean4_translator",
            json!({"statement": "Every bounded entire function is constant."}),
        ))
        .unwrap();
    assert!(out.ok);
    assert!(out.payload.contains("theorem"));
}

/// Counting wrapper to observe cache behavior.
struct Counting<B> {
    inner: B,
    compiles: Arc<AtomicUsize>,
}

impl<B: ToolBackend> ToolBackend for Counting<B> {
    fn snapshot_id(&self) -> &str {
        self.inner.snapshot_id()
    }
    fn compile(&self, content: &str) -> Result<CompilerReport, ToolError> {
        self.compiles.fetch_add(1, Ordering::SeqCst);
        self.inner.compile(content)
    }
    fn herald_draft(&self, statement: &str) -> Result<ToolOutcome, ToolError> {
        self.inner.herald_draft(statement)
    }
    fn web_search(&self, query: &str) -> Result<ToolOutcome, ToolError> {
        self.inner.web_search(query)
    }
    fn symbol_index(&self) -> &SymbolIndex {
        self.inner.symbol_index()
    }
}

#[test]
fn compile_cache_hits_only_on_matching_content_and_snapshot() {
    let compiles = Arc::new(AtomicUsize::new(0));
    let pool = SessionPool::new(
        Arc::new(Counting {
            inner: StubBackend::with_default_table(),
            compiles: compiles.clone(),
        }),
        1,
    );
    let a = pool.compile(VALID).unwrap();
    let b = pool.compile(VALID).unwrap();
    assert_eq!(compiles.load(Ordering::SeqCst), 1, "identical content is cached");
    assert_eq!(a, b);

    pool.compile("import Mathlib\n\ntheorem u : 2 + 2 = 4 := by sorry\n").unwrap();
    assert_eq!(compiles.load(Ordering::SeqCst), 2, "different content misses");

    // Same content under a different snapshot id must recompile.
    let compiles2 = Arc::new(AtomicUsize::new(0));
    let pool2 = SessionPool::new(
        Arc::new(Counting {
            inner: StubBackend::with_default_table().with_snapshot("stub-mathlib-v2"),
            compiles: compiles2.clone(),
        }),
        1,
    );
    let c = pool2.compile(VALID).unwrap();
    assert_eq!(compiles2.load(Ordering::SeqCst), 1);
    assert_eq!(c.snapshot_id, "stub-mathlib-v2");
    assert_eq!(a.snapshot_id, "stub-mathlib-v1");
}

#[test]
fn compile_determinism_across_pools() {
    let make = || SessionPool::new(Arc::new(StubBackend::with_default_table()), 1);
    let a = make().compile(VALID).unwrap();
    let b = make().compile(VALID).unwrap();
    assert_eq!(a.success, b.success);
    assert_eq!(a.messages, b.messages);
}

/// Backend equivalence: a toolbelt over the replay backend reproduces the
/// outcomes recorded through the stub backend, byte for byte on payloads.
#[test]
fn replay_backend_is_structurally_indistinguishable() {
    let fixture_dir = tempfile::tempdir().unwrap();
    let ws1 = tempfile::tempdir().unwrap();
    let calls = vec![
        call("c1", "lean_write_file", json!({"path": "f.lean", "content": VALID})),
        call("c2", "lean4_repl_runner", json!({"path": "f.lean"})),
        call("c3", "lean_inspect_name", json!({"name": "Polynomial.natDegree", "include_print": true})),
        call("c4", "lean4_translator", json!({"statement": "s"})),
        call("c5", "search_online", json!({"query": "q"})),
        call("c6", "lean_resolve_name", json!({"token": "natDegre"})),
    ];

    let recorded: Vec<ToolOutcome> = {
        let backend = RecordingToolBackend::new(
            Arc::new(StubBackend::with_default_table()),
            fixture_dir.path(),
        )
        .unwrap();
        let pool = SessionPool::new(Arc::new(backend), 1);
        let mut belt = Toolbelt::new(pool, ws1.path().to_path_buf(), "111".parse().unwrap());
        calls.iter().map(|c| belt.execute(c).unwrap()).collect()
    };

    let ws2 = tempfile::tempdir().unwrap();
    let replay = ReplayToolBackend::open(fixture_dir.path()).unwrap();
    let pool = SessionPool::new(Arc::new(replay), 1);
    let mut belt = Toolbelt::new(pool, ws2.path().to_path_buf(), "111".parse().unwrap());
    let replayed: Vec<ToolOutcome> = calls.iter().map(|c| belt.execute(c).unwrap()).collect();

    assert_eq!(recorded, replayed);
}

#[test]
fn unknown_tool_name_is_distinguished_from_inactive() {
    let dir = tempfile::tempdir().unwrap();
    let mut belt = full_toolbelt(dir.path());
    let out = belt
        .execute(&call("c1", "lean_prove_everything", json!({})))
        .unwrap();
    assert!(!out.ok);
    assert!(out.payload.contains("unknown tool"));
}

#[test]
fn pool_serves_concurrent_compiles() {
    let pool = SessionPool::new(Arc::new(StubBackend::with_default_table()), 2);
    std::thread::scope(|scope| {
        for i in 0..8 {
            let pool = &pool;
            scope.spawn(move || {
                let src = format!("import Mathlib\n\ntheorem t{i} : 1 + 1 = 2 := by sorry\n");
                let report = pool.compile(&src).unwrap();
                assert!(report.success);
            });
        }
    });
}
