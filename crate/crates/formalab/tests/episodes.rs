//! Controller-loop integration tests: scripted episodes against the stub
//! checker, exercising the success protocol, the budget, tool dispatch, and
//! transcript integrity.

use std::sync::Arc;

use serde_json::json;

use formalab::agent::{one_shot, run_episode, EpisodeResult, EpisodeStatus};
use formalab::chat::Message;
use formalab::config::ToolConfig;
use formalab::corpus::{Domain, TheoremItem};
use formalab::gateway::scripted::{tool_call_msg, ScriptedModel};
use formalab::gateway::Orchestrator;
use formalab::prompt::PromptTemplates;
use formalab::tools::stub::StubBackend;
use formalab::tools::{SessionPool, Toolbelt, TOOL_REPL};

fn item() -> TheoremItem {
    TheoremItem {
        id: "ca_17658".into(),
        domain: Domain::ComplexAnalysis,
        statement_text: "A polynomial with a root has positive degree.".into(),
        source_ref: "lecture notes".into(),
    }
}

fn scripted(messages: Vec<Message>) -> Orchestrator {
    Orchestrator::new("scripted", Box::new(ScriptedModel::from_messages(messages).unwrap()))
}

fn toolbelt(config: ToolConfig, workspace: &std::path::Path) -> Toolbelt {
    let pool = SessionPool::new(Arc::new(StubBackend::with_default_table()), 2);
    Toolbelt::new(pool, workspace.to_path_buf(), config)
}

const VALID_FILE: &str = "import Mathlib\n\ntheorem ca_17658 : 1 + 1 = 2 := by sorry\n";

fn run(
    config: &str,
    script: Vec<Message>,
    t_max: u32,
) -> (EpisodeResult, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let config: ToolConfig = config.parse().unwrap();
    let mut belt = toolbelt(config, dir.path());
    let orch = scripted(script);
    let result = run_episode(
        &item(),
        config,
        &orch,
        &mut belt,
        &PromptTemplates::embedded(),
        t_max,
    )
    .unwrap();
    (result, dir)
}

#[test]
fn minimal_success_in_two_steps() {
    // Step 1: one assistant message carrying both the write and the compile.
    // Step 2: the success declaration.
    let write = formalab::chat::ToolCall {
        call_id: "c1".into(),
        tool_name: "lean_write_file".into(),
        arguments: json!({"path": "ca_17658.lean", "content": VALID_FILE}),
    };
    let compile = formalab::chat::ToolCall {
        call_id: "c2".into(),
        tool_name: "lean4_repl_runner".into(),
        arguments: json!({"path": "ca_17658.lean"}),
    };
    let script = vec![
        Message::assistant_calls("", vec![write, compile]),
        Message::assistant(r#"{ "status": "success" }"#),
    ];
    let (result, _dir) = run("010", script, 24);
    assert_eq!(result.status, EpisodeStatus::Success);
    assert_eq!(result.steps_used, 2);
    assert_eq!(result.transcript.tool_outcomes.len(), 2);
    assert_eq!(result.final_code.as_deref(), Some(VALID_FILE));
    result.transcript.check_integrity().unwrap();
}

#[test]
fn three_step_write_compile_declare() {
    let script = vec![
        tool_call_msg("c1", "lean_write_file", json!({"path": "f.lean", "content": VALID_FILE})),
        tool_call_msg("c2", "lean4_repl_runner", json!({"path": "f.lean"})),
        Message::assistant(r#"{ "status": "success" }"#),
    ];
    let (result, _dir) = run("010", script, 24);
    assert_eq!(result.status, EpisodeStatus::Success);
    assert_eq!(result.steps_used, 3);
    result.transcript.check_integrity().unwrap();
}

#[test]
fn budget_exhaustion_fails_at_exactly_t_max() {
    let script: Vec<Message> = (0..30)
        .map(|i| Message::assistant(format!("still thinking, turn {i}")))
        .collect();
    let (result, _dir) = run("010", script, 24);
    assert_eq!(result.status, EpisodeStatus::Failure);
    assert_eq!(result.steps_used, 24);
    assert_eq!(result.transcript.steps, 24);
    assert!(result.annotations.iter().any(|a| a.contains("budget")));
    result.transcript.check_integrity().unwrap();
}

/// The eight-call repair-loop trace: write a draft referencing a symbol
/// that does not exist, compile (fails), probe four names, rewrite with
/// the real names, compile (succeeds), declare success.
#[test]
fn repair_loop_trace_with_eight_tool_calls() {
    let draft = "import Mathlib\n\ntheorem ca_17658 (p : Polynomial \u{211d}) : Polynomial.IsConstant p \u{2192} p.natDegree = 0 := by sorry";
    let patched = "import Mathlib\n\ntheorem ca_17658 (p : Polynomial \u{211d}) (hp : p.natDegree \u{2260} 0) : \u{2203} z, Polynomial.eval z p = 0 := by sorry";
    let path = "ca_17658.lean";
    let script = vec![
        tool_call_msg("c1", "lean_write_file", json!({"path": path, "content": draft})),
        tool_call_msg("c2", "lean4_repl_runner", json!({"path": path})),
        tool_call_msg("c3", "lean_inspect_name", json!({"name": "Polynomial.IsConstant"})),
        tool_call_msg("c4", "lean_inspect_name", json!({"name": "Polynomial.eval"})),
        tool_call_msg("c5", "lean_inspect_name", json!({"name": "Polynomial.isConstant"})),
        tool_call_msg("c6", "lean_inspect_name", json!({"name": "Polynomial.natDegree"})),
        tool_call_msg("c7", "lean_write_file", json!({"path": path, "content": patched})),
        tool_call_msg("c8", "lean4_repl_runner", json!({"path": path})),
        Message::assistant(r#"{ "status": "success" }"#),
    ];
    let (result, _dir) = run("111", script, 24);
    assert_eq!(result.status, EpisodeStatus::Success);
    assert_eq!(result.steps_used, 9);
    assert_eq!(result.transcript.tool_outcomes.len(), 8);

    // The last tool outcome is a successful compiler run.
    let (last_call, last_outcome) = result.transcript.tool_outcomes.last().unwrap();
    assert_eq!(result.transcript.tool_name_of_call(last_call), Some(TOOL_REPL));
    assert!(last_outcome.ok);
    assert_eq!(result.transcript.last_compile_success(), Some(true));

    // The first compile failed on the unknown identifier.
    let (_, first_compile) = &result.transcript.tool_outcomes[1];
    assert!(first_compile.payload.contains("\"success\":false"));
    assert!(first_compile.payload.contains("Polynomial.IsConstant"));

    // Probe answers: exists=false, true, false, true.
    for (idx, expected) in [(2, false), (3, true), (4, false), (5, true)] {
        let (_, outcome) = &result.transcript.tool_outcomes[idx];
        let payload: serde_json::Value = serde_json::from_str(&outcome.payload).unwrap();
        assert_eq!(payload["exists"], json!(expected), "probe #{idx}");
    }

    assert_eq!(result.final_code.as_deref(), Some(patched));
    result.transcript.check_integrity().unwrap();
}

#[test]
fn success_over_failing_compile_is_failed_and_annotated() {
    let broken = "import Mathlib\n\ntheorem ca_17658 : Definitely.Not.Real := by sorry";
    let script = vec![
        tool_call_msg("c1", "lean_write_file", json!({"path": "f.lean", "content": broken})),
        tool_call_msg("c2", "lean4_repl_runner", json!({"path": "f.lean"})),
        Message::assistant(r#"{ "status": "success" }"#),
    ];
    let (result, _dir) = run("010", script, 24);
    assert_eq!(result.status, EpisodeStatus::Failure);
    assert!(result
        .annotations
        .iter()
        .any(|a| a.contains("last compiler run failed")));
}

#[test]
fn success_without_any_compile_needs_no_verification_when_feedback_off() {
    let script = vec![
        tool_call_msg("c1", "lean_write_file", json!({"path": "f.lean", "content": VALID_FILE})),
        Message::assistant(r#"{ "status": "success" }"#),
    ];
    let (result, _dir) = run("100", script, 24);
    // No compiler access in this regime: the declaration is accepted.
    assert_eq!(result.status, EpisodeStatus::Success);
}

#[test]
fn embedded_success_declaration_is_accepted_with_warning() {
    let script = vec![
        tool_call_msg("c1", "lean_write_file", json!({"path": "f.lean", "content": VALID_FILE})),
        Message::assistant(r#"Everything checks out. {"status": "success"}"#),
    ];
    let (result, _dir) = run("100", script, 24);
    assert_eq!(result.status, EpisodeStatus::Success);
    assert!(result.annotations.iter().any(|a| a.contains("conformance")));
}

#[test]
fn inactive_tool_call_becomes_error_reply_and_loop_continues() {
    // Config 010 has no search tools; the inspect call must produce an
    // error tool message, not abort the episode.
    let script = vec![
        tool_call_msg("c1", "lean_inspect_name", json!({"name": "Polynomial.eval"})),
        tool_call_msg("c2", "lean_write_file", json!({"path": "f.lean", "content": VALID_FILE})),
        tool_call_msg("c3", "lean4_repl_runner", json!({"path": "f.lean"})),
        Message::assistant(r#"{ "status": "success" }"#),
    ];
    let (result, _dir) = run("010", script, 24);
    assert_eq!(result.status, EpisodeStatus::Success);
    let (_, first) = &result.transcript.tool_outcomes[0];
    assert!(!first.ok);
    assert!(first.payload.contains("not available"));
    result.transcript.check_integrity().unwrap();
}

#[test]
fn malformed_arguments_become_error_reply() {
    let script = vec![
        tool_call_msg("c1", "lean_write_file", json!({"content": VALID_FILE})), // missing path
        tool_call_msg("c2", "lean_write_file", json!({"path": "f.lean", "content": VALID_FILE})),
        tool_call_msg("c3", "lean4_repl_runner", json!({})),
        Message::assistant(r#"{ "status": "success" }"#),
    ];
    let (result, _dir) = run("010", script, 24);
    assert_eq!(result.status, EpisodeStatus::Success);
    let (_, first) = &result.transcript.tool_outcomes[0];
    assert!(!first.ok);
    // The parameterless compile ran against the last written file.
    assert_eq!(result.transcript.last_compile_success(), Some(true));
}

#[test]
fn gateway_exhaustion_marks_failure_with_annotation() {
    // A one-message script exhausts on the second step.
    let script = vec![Message::assistant("working on it")];
    let dir = tempfile::tempdir().unwrap();
    let config: ToolConfig = "010".parse().unwrap();
    let mut belt = toolbelt(config, dir.path());
    let orch = scripted(script);
    let err = run_episode(
        &item(),
        config,
        &orch,
        &mut belt,
        &PromptTemplates::embedded(),
        24,
    );
    // Script exhaustion signals test misconfiguration and aborts.
    assert!(err.is_err());
}

#[test]
fn replay_determinism_identical_transcripts() {
    let script = || {
        vec![
            tool_call_msg("c1", "lean_write_file", json!({"path": "f.lean", "content": VALID_FILE})),
            tool_call_msg("c2", "lean4_repl_runner", json!({"path": "f.lean"})),
            Message::assistant(r#"{ "status": "success" }"#),
        ]
    };
    let (a, _da) = run("010", script(), 24);
    let (b, _db) = run("010", script(), 24);
    assert_eq!(
        serde_json::to_string(&a.transcript).unwrap(),
        serde_json::to_string(&b.transcript).unwrap()
    );
    assert_eq!(a.transcript.content_hash(), b.transcript.content_hash());
}

#[test]
fn transcript_opens_with_system_then_user_statement() {
    let script = vec![Message::assistant(r#"{ "status": "success" }"#)];
    let (result, _dir) = run("100", script, 24);
    let messages = &result.transcript.messages;
    assert_eq!(messages[0].role, formalab::chat::Role::System);
    assert!(messages[0].content.contains("AVAILABLE TOOLS"));
    assert_eq!(messages[1].role, formalab::chat::Role::User);
    assert!(messages[1].content.contains(&item().statement_text));
}

#[test]
fn one_shot_extracts_first_code_block() {
    let script = vec![Message::assistant(format!(
        "Here is the translation.\n\n```lean\n{VALID_FILE}```\n"
    ))];
    let orch = scripted(script);
    let result = one_shot(&item(), &orch, &PromptTemplates::embedded()).unwrap();
    assert_eq!(result.status, EpisodeStatus::Success);
    assert_eq!(result.steps_used, 1);
    assert_eq!(result.final_code.as_deref(), Some(VALID_FILE));
    result.transcript.check_integrity().unwrap();
}

#[test]
fn one_shot_prose_only_fails() {
    let script = vec![Message::assistant("I cannot translate this one.")];
    let orch = scripted(script);
    let result = one_shot(&item(), &orch, &PromptTemplates::embedded()).unwrap();
    assert_eq!(result.status, EpisodeStatus::Failure);
    assert!(result.annotations.iter().any(|a| a.contains("no code emitted")));
}

#[test]
fn zero_budget_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config: ToolConfig = "010".parse().unwrap();
    let mut belt = toolbelt(config, dir.path());
    let orch = scripted(vec![Message::assistant("x")]);
    assert!(run_episode(&item(), config, &orch, &mut belt, &PromptTemplates::embedded(), 0)
        .is_err());
}
