//! The episode controller: a budgeted orchestrator/tool loop.
//!
//! Each step sends the full message history to the orchestrator, executes
//! any tool calls it makes (appending every result as a tool message), and
//! stops when the orchestrator declares success or the step budget runs
//! out. A "step" is one orchestrator invocation; tool executions do not
//! consume budget.
//!
//! When compiler feedback is active, a success declaration only counts if
//! the most recent compile in the transcript actually succeeded; an episode
//! where the model declares success over a failing compile is failed and
//! annotated.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{Message, Role};
use crate::config::ToolConfig;
use crate::corpus::TheoremItem;
use crate::gateway::Orchestrator;
use crate::net::sha256_hex;
use crate::prompt::PromptTemplates;
use crate::tools::{specs_for_config, CompilerReport, ToolOutcome, Toolbelt, TOOL_REPL, TOOL_WRITE_FILE};

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("step budget must be at least 1")]
    ZeroBudget,
    #[error("toolbelt does not match the episode configuration: {0}")]
    ToolbeltMismatch(String),
    #[error("tool backend failure: {0}")]
    Tool(#[from] crate::tools::ToolError),
    #[error("gateway cannot serve this episode: {0}")]
    Gateway(crate::gateway::GatewayError),
    #[error("transcript violates integrity: {0}")]
    Integrity(String),
}

/// Fixture misses and configuration problems abort the episode (the run
/// could never succeed and retrying hides the miss); provider-side failures
/// fail the episode with an annotation instead.
fn is_fatal_gateway_error(error: &crate::gateway::GatewayError) -> bool {
    use crate::gateway::GatewayError::*;
    matches!(error, FixtureMiss { .. } | Configuration(_) | ScriptExhausted { .. })
}

/// Full message and tool history of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTranscript {
    pub messages: Vec<Message>,
    /// Tool results in call order, keyed by call id.
    pub tool_outcomes: Vec<(String, ToolOutcome)>,
    /// Orchestrator invocations; equals the number of assistant messages.
    pub steps: u32,
}

impl EpisodeTranscript {
    fn new(system: Message, user: Message) -> Self {
        EpisodeTranscript { messages: vec![system, user], tool_outcomes: Vec::new(), steps: 0 }
    }

    /// Tool name behind a call id, from the assistant message that made it.
    pub fn tool_name_of_call(&self, call_id: &str) -> Option<&str> {
        self.messages.iter().find_map(|m| {
            m.tool_calls
                .iter()
                .find(|c| c.call_id == call_id)
                .map(|c| c.tool_name.as_str())
        })
    }

    /// Success flag of the most recent compiler run, if any ran.
    pub fn last_compile_success(&self) -> Option<bool> {
        self.tool_outcomes.iter().rev().find_map(|(call_id, outcome)| {
            if self.tool_name_of_call(call_id) != Some(TOOL_REPL) {
                return None;
            }
            if !outcome.ok {
                return Some(false);
            }
            serde_json::from_str::<CompilerReport>(&outcome.payload)
                .ok()
                .map(|r| r.success)
        })
    }

    /// Structural invariants: messages 0/1 are system and user; every tool
    /// message answers exactly one earlier call; every call has exactly one
    /// reply; steps equals the assistant message count.
    pub fn check_integrity(&self) -> Result<(), EpisodeError> {
        let fail = |m: String| Err(EpisodeError::Integrity(m));
        if self.messages.len() < 2 {
            return fail("transcript must open with system and user messages".into());
        }
        if self.messages[0].role != Role::System {
            return fail("messages[0] must be the system prompt".into());
        }
        if self.messages[1].role != Role::User {
            return fail("messages[1] must be the user statement".into());
        }
        let assistants = self.messages.iter().filter(|m| m.role == Role::Assistant).count();
        if assistants as u32 != self.steps {
            return fail(format!("steps={} but {assistants} assistant messages", self.steps));
        }

        let mut calls_seen: HashMap<&str, usize> = HashMap::new();
        let mut replies: HashMap<&str, usize> = HashMap::new();
        for (idx, message) in self.messages.iter().enumerate() {
            for call in &message.tool_calls {
                if calls_seen.insert(call.call_id.as_str(), idx).is_some() {
                    return fail(format!("duplicate tool call id {:?}", call.call_id));
                }
            }
            if message.role == Role::Tool {
                let target = message.in_reply_to.as_deref().unwrap_or_default();
                match calls_seen.get(target) {
                    Some(&call_idx) if call_idx < idx => {
                        *replies.entry(target).or_insert(0) += 1;
                    }
                    _ => return fail(format!("tool message answers unknown call {target:?}")),
                }
            }
        }
        for (call_id, _) in &calls_seen {
            match replies.get(call_id) {
                Some(1) => {}
                Some(n) => return fail(format!("call {call_id:?} answered {n} times")),
                None => return fail(format!("call {call_id:?} has no tool reply")),
            }
        }
        Ok(())
    }

    /// Content hash used as the transcript storage key.
    pub fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("transcripts serialize").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub status: EpisodeStatus,
    pub transcript: EpisodeTranscript,
    /// Last content written to the workspace, or for the baseline the code
    /// block extracted from the final assistant message.
    pub final_code: Option<String>,
    pub steps_used: u32,
    /// Conformance warnings and failure reasons.
    pub annotations: Vec<String>,
}

enum Declaration {
    Strict,
    Embedded,
}

fn success_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"\{\s*"status"\s*:\s*"success"\s*\}"#).expect("valid regex"))
}

/// Detect the success declaration: the literal JSON object, or the same
/// object embedded in prose (accepted with a conformance warning).
fn parse_success_declaration(content: &str) -> Option<Declaration> {
    if let Ok(value) = serde_json::from_str::<serde_json::Value>(content.trim()) {
        if value.get("status").and_then(|s| s.as_str()) == Some("success") {
            return Some(Declaration::Strict);
        }
    }
    success_regex().is_match(content).then_some(Declaration::Embedded)
}

fn fenced_code_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)```(?:[a-zA-Z0-9_+-]*)\n(.*?)```").expect("valid regex")
    })
}

/// First fenced code block in a response, if any.
pub fn extract_code_block(content: &str) -> Option<String> {
    fenced_code_regex()
        .captures(content)
        .map(|caps| caps[1].to_string())
}

/// Run one tool-augmented episode under a step budget.
pub fn run_episode(
    item: &TheoremItem,
    config: ToolConfig,
    orchestrator: &Orchestrator,
    toolbelt: &mut Toolbelt,
    templates: &PromptTemplates,
    t_max: u32,
) -> Result<EpisodeResult, EpisodeError> {
    if t_max == 0 {
        return Err(EpisodeError::ZeroBudget);
    }
    if toolbelt.config() != config {
        return Err(EpisodeError::ToolbeltMismatch(format!(
            "toolbelt is for {}, episode is {}",
            toolbelt.config(),
            config
        )));
    }

    let system = Message::system(templates.assemble_system_prompt(config));
    let user = Message::user(templates.render_user(item));
    let mut transcript = EpisodeTranscript::new(system, user);
    let mut annotations = Vec::new();
    let tool_specs = specs_for_config(config);
    let mut final_code: Option<String> = None;

    let finish = |status, transcript: EpisodeTranscript, final_code, annotations| {
        let steps_used = transcript.steps;
        Ok(EpisodeResult { status, transcript, final_code, steps_used, annotations })
    };

    for _step in 1..=t_max {
        let response =
            match orchestrator.complete(transcript.messages.clone(), tool_specs.clone()) {
                Ok(response) => response,
                Err(e) if is_fatal_gateway_error(&e) => return Err(EpisodeError::Gateway(e)),
                Err(e) => {
                    annotations.push(format!("gateway failure: {e}"));
                    return finish(EpisodeStatus::Failure, transcript, final_code, annotations);
                }
            };
        let assistant = response.message;
        transcript.steps += 1;
        transcript.messages.push(assistant.clone());

        for call in &assistant.tool_calls {
            let outcome = toolbelt.execute(call)?;
            if call.tool_name == TOOL_WRITE_FILE && outcome.ok {
                if let Some(content) = call.arguments.get("content").and_then(|v| v.as_str()) {
                    final_code = Some(content.to_string());
                }
            }
            let body = serde_json::to_string(&outcome).expect("tool outcomes serialize");
            transcript.messages.push(Message::tool_reply(call.call_id.clone(), body));
            transcript.tool_outcomes.push((call.call_id.clone(), outcome));
        }

        if let Some(declaration) = parse_success_declaration(&assistant.content) {
            if matches!(declaration, Declaration::Embedded) {
                log::warn!(
                    "episode {}/{}: success declaration embedded in prose",
                    item.id,
                    config
                );
                annotations.push("conformance: success declaration embedded in prose".into());
            }
            if config.feedback {
                // Success must be backed by the last compiler run.
                match transcript.last_compile_success() {
                    Some(true) => {
                        return finish(EpisodeStatus::Success, transcript, final_code, annotations)
                    }
                    Some(false) => {
                        annotations.push(
                            "success declared but the last compiler run failed".into(),
                        );
                        return finish(EpisodeStatus::Failure, transcript, final_code, annotations);
                    }
                    None => {
                        annotations
                            .push("success declared without any compiler run".into());
                        return finish(EpisodeStatus::Failure, transcript, final_code, annotations);
                    }
                }
            }
            return finish(EpisodeStatus::Success, transcript, final_code, annotations);
        }
    }

    annotations.push(format!("step budget {t_max} exhausted"));
    finish(EpisodeStatus::Failure, transcript, final_code, annotations)
}

/// One-shot baseline: a single model call with no tools; the translation is
/// the first fenced code block of the response.
pub fn one_shot(
    item: &TheoremItem,
    orchestrator: &Orchestrator,
    templates: &PromptTemplates,
) -> Result<EpisodeResult, EpisodeError> {
    let system = Message::system(templates.assemble_system_prompt(ToolConfig::BASELINE));
    let user = Message::user(templates.render_user(item));
    let mut transcript = EpisodeTranscript::new(system, user);
    let mut annotations = Vec::new();

    match orchestrator.complete(transcript.messages.clone(), Vec::new()) {
        Ok(response) => {
            transcript.steps = 1;
            transcript.messages.push(response.message.clone());
            let final_code = extract_code_block(&response.message.content);
            let status = if final_code.is_some() {
                EpisodeStatus::Success
            } else {
                annotations.push("no code emitted".into());
                EpisodeStatus::Failure
            };
            Ok(EpisodeResult { status, transcript, final_code, steps_used: 1, annotations })
        }
        Err(e) if is_fatal_gateway_error(&e) => Err(EpisodeError::Gateway(e)),
        Err(e) => {
            annotations.push(format!("gateway failure: {e}"));
            Ok(EpisodeResult {
                status: EpisodeStatus::Failure,
                transcript,
                final_code: None,
                steps_used: 0,
                annotations,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chat::ToolCall;

    #[test]
    fn success_declaration_forms() {
        assert!(matches!(
            parse_success_declaration(r#"{ "status": "success" }"#),
            Some(Declaration::Strict)
        ));
        assert!(matches!(
            parse_success_declaration(r#"{"status":"success"}"#),
            Some(Declaration::Strict)
        ));
        assert!(matches!(
            parse_success_declaration(r#"All done! {"status": "success"} as requested."#),
            Some(Declaration::Embedded)
        ));
        assert!(parse_success_declaration("still working on it").is_none());
        assert!(parse_success_declaration(r#"{"status": "failure"}"#).is_none());
    }

    #[test]
    fn code_block_extraction() {
        let text = "Here you go:\n```lean\nimport Mathlib\ntheorem t : 1 = 1 := by sorry\n```\n";
        let code = extract_code_block(text).unwrap();
        assert!(code.starts_with("import Mathlib"));
        assert!(extract_code_block("prose only").is_none());
        // First block wins.
        let two = "```\nfirst\n```\n```\nsecond\n```";
        assert_eq!(extract_code_block(two).unwrap(), "first\n");
    }

    #[test]
    fn integrity_catches_unanswered_calls() {
        let call = ToolCall {
            call_id: "c1".into(),
            tool_name: TOOL_WRITE_FILE.into(),
            arguments: serde_json::json!({}),
        };
        let mut t = EpisodeTranscript::new(Message::system("s"), Message::user("u"));
        t.messages.push(Message::assistant_calls("", vec![call]));
        t.steps = 1;
        assert!(t.check_integrity().is_err());
        t.messages.push(Message::tool_reply("c1", "{}"));
        assert!(t.check_integrity().is_ok());
    }

    #[test]
    fn integrity_catches_orphan_tool_replies() {
        let mut t = EpisodeTranscript::new(Message::system("s"), Message::user("u"));
        t.messages.push(Message::tool_reply("ghost", "{}"));
        assert!(t.check_integrity().is_err());
    }
}
