//! Deterministic synthetic models for desk-scale runs: an orchestrator that
//! behaves like a competent formalizing agent against the stub checker, and
//! a pair of judges with different strictness. Everything is a pure function
//! of the request, so reruns replay identically.

use serde_json::{json, Value};

use super::{ChatModel, ChatTurnRequest, ChatTurnResponse, GatewayError, TokenUsage};
use crate::chat::{Message, Role, ToolCall};
use crate::net::sha256_hex;
use crate::tools::{
    stub::valid_statement_file, TOOL_INSPECT, TOOL_REPL, TOOL_TRANSLATOR, TOOL_WRITE_FILE,
};

fn respond(message: Message) -> ChatTurnResponse {
    ChatTurnResponse {
        message,
        usage: TokenUsage { prompt_tokens: 64, completion_tokens: 16 },
        provider_meta: Value::Null,
    }
}

fn hash_prefix_u64(text: &str) -> u64 {
    let hex = sha256_hex(text.as_bytes());
    u64::from_str_radix(&hex[..16], 16).expect("hex prefix parses")
}

/// Pull the theorem name out of the rendered user prompt.
fn theorem_id_from_history(history: &[Message]) -> String {
    history
        .iter()
        .find(|m| m.role == Role::User)
        .and_then(|m| {
            m.content.lines().find_map(|line| {
                line.strip_prefix("Theorem name:").map(|s| s.trim().to_string())
            })
        })
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "thm".to_string())
}

/// Synthetic orchestrator: drafts (if the drafter is available), optionally
/// probes a symbol, writes a checker-valid file, compiles (if the REPL is
/// available), then declares success.
pub struct StubOrchestrator;

impl ChatModel for StubOrchestrator {
    fn complete(&self, request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError> {
        let theorem_id = theorem_id_from_history(&request.history);

        // No tools advertised: plain one-shot generation.
        if request.tool_specs.is_empty() {
            let code = valid_statement_file(&theorem_id);
            return Ok(respond(Message::assistant(format!(
                "Here is the translation:\n\n```lean\n{code}```\n"
            ))));
        }

        let available: Vec<&str> =
            request.tool_specs.iter().map(|s| s.name.as_str()).collect();
        let mut plan: Vec<(&str, Value)> = Vec::new();
        if available.contains(&TOOL_TRANSLATOR) {
            plan.push((TOOL_TRANSLATOR, json!({ "statement": "see user message" })));
        }
        if available.contains(&TOOL_INSPECT) {
            plan.push((TOOL_INSPECT, json!({ "name": "Polynomial.natDegree" })));
        }
        let path = format!("{theorem_id}.lean");
        plan.push((
            TOOL_WRITE_FILE,
            json!({ "path": path, "content": valid_statement_file(&theorem_id) }),
        ));
        if available.contains(&TOOL_REPL) {
            plan.push((TOOL_REPL, json!({ "path": path })));
        }

        let step = request
            .history
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .count();
        match plan.get(step) {
            Some((tool, arguments)) => Ok(respond(Message::assistant_calls(
                "",
                vec![ToolCall {
                    call_id: format!("call_{}", step + 1),
                    tool_name: tool.to_string(),
                    arguments: arguments.clone(),
                }],
            ))),
            None => Ok(respond(Message::assistant(r#"{ "status": "success" }"#))),
        }
    }
}

/// How strictly a synthetic judge grades compiling code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeStrictness {
    /// Occasionally grades a compiling translation just below the bar.
    Strict,
    /// Accepts every compiling translation.
    Lenient,
}

/// Synthetic judge honoring the output contract: single JSON object with
/// exactly the three keys, grade capped at 3 when the code did not compile.
pub struct StubJudge {
    strictness: JudgeStrictness,
}

impl StubJudge {
    pub fn new(strictness: JudgeStrictness) -> Self {
        StubJudge { strictness }
    }
}

impl ChatModel for StubJudge {
    fn complete(&self, request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError> {
        let input = request
            .history
            .iter()
            .rfind(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        let compile_pass = input
            .lines()
            .find_map(|l| l.strip_prefix("compile_pass:").map(str::trim))
            .map(|v| v == "true")
            .unwrap_or(false);
        let h = hash_prefix_u64(input);

        let (faithful, grade, note) = if !compile_pass {
            (false, (h % 4) as u8, "does not compile, graded within 0..3")
        } else {
            match self.strictness {
                JudgeStrictness::Strict if h % 5 == 0 => {
                    (false, 8, "compiles but a hypothesis reads weaker than the original")
                }
                JudgeStrictness::Strict => (true, 9 + (h % 2) as u8, "statement-level meaning matches"),
                JudgeStrictness::Lenient => (true, 9 + ((h >> 3) % 2) as u8, "meaning matches"),
            }
        };
        let body = json!({
            "faithful": faithful,
            "grade": grade,
            "thought": format!("### BEGIN THOUGHT\n{note}\n### END THOUGHT"),
        });
        Ok(respond(Message::assistant(body.to_string())))
    }
}
