//! Chat messages and tool calls: the shared vocabulary between the agent
//! controller, the model gateway, and episode transcripts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// A tool invocation requested by the assistant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    pub tool_name: String,
    /// JSON object of named arguments, field names per the tool API.
    pub arguments: serde_json::Value,
}

/// One turn of conversation history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    /// For tool-role messages: the assistant tool call this answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MessageError {
    #[error("assistant message must carry content, tool calls, or both")]
    EmptyAssistant,
    #[error("tool message must carry in_reply_to referencing a prior tool call")]
    ToolWithoutReplyTarget,
    #[error("{0:?} message must not carry tool calls")]
    UnexpectedToolCalls(Role),
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into(), tool_calls: Vec::new(), in_reply_to: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into(), tool_calls: Vec::new(), in_reply_to: None }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into(), tool_calls: Vec::new(), in_reply_to: None }
    }

    pub fn assistant_calls(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Message { role: Role::Assistant, content: content.into(), tool_calls, in_reply_to: None }
    }

    pub fn tool_reply(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Message {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            in_reply_to: Some(call_id.into()),
        }
    }

    /// Structural validity for a single message.
    pub fn check(&self) -> Result<(), MessageError> {
        match self.role {
            Role::Assistant => {
                if self.content.is_empty() && self.tool_calls.is_empty() {
                    return Err(MessageError::EmptyAssistant);
                }
            }
            Role::Tool => {
                if self.in_reply_to.is_none() {
                    return Err(MessageError::ToolWithoutReplyTarget);
                }
                if !self.tool_calls.is_empty() {
                    return Err(MessageError::UnexpectedToolCalls(Role::Tool));
                }
            }
            Role::System | Role::User => {
                if !self.tool_calls.is_empty() {
                    return Err(MessageError::UnexpectedToolCalls(self.role));
                }
            }
        }
        Ok(())
    }
}
