//! Scripted model: pops canned responses in order. Test plumbing.

use std::collections::VecDeque;
use std::sync::Mutex;

use serde_json::Value;

use super::{ChatModel, ChatTurnRequest, ChatTurnResponse, GatewayError, TokenUsage};
use crate::chat::{Message, ToolCall};

pub struct ScriptedModel {
    script: Mutex<VecDeque<ChatTurnResponse>>,
    total: usize,
}

impl ScriptedModel {
    pub fn new(script: Vec<ChatTurnResponse>) -> Result<Self, GatewayError> {
        if script.is_empty() {
            return Err(GatewayError::Configuration("scripted model needs a non-empty script".into()));
        }
        let total = script.len();
        Ok(ScriptedModel { script: Mutex::new(script.into()), total })
    }

    /// Script from bare assistant messages with default usage counts.
    pub fn from_messages(messages: Vec<Message>) -> Result<Self, GatewayError> {
        Self::new(
            messages
                .into_iter()
                .map(|message| ChatTurnResponse {
                    message,
                    usage: TokenUsage { prompt_tokens: 10, completion_tokens: 10 },
                    provider_meta: Value::Null,
                })
                .collect(),
        )
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl ChatModel for ScriptedModel {
    fn complete(&self, _request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError> {
        let mut script = self.script.lock().unwrap();
        script
            .pop_front()
            .ok_or(GatewayError::ScriptExhausted { served: self.total })
    }
}

/// Assistant message carrying a single tool call, for scripting episodes.
pub fn tool_call_msg(call_id: &str, tool: &str, arguments: Value) -> Message {
    Message::assistant_calls(
        "",
        vec![ToolCall {
            call_id: call_id.to_string(),
            tool_name: tool.to_string(),
            arguments,
        }],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ChatTurnRequest {
        ChatTurnRequest {
            model_id: "scripted".into(),
            history: vec![],
            tool_specs: vec![],
            decoding: Value::Null,
        }
    }

    #[test]
    fn pops_in_order_then_errors() {
        let model = ScriptedModel::from_messages(vec![
            Message::assistant("one"),
            Message::assistant("two"),
        ])
        .unwrap();
        assert_eq!(model.complete(&request()).unwrap().message.content, "one");
        assert_eq!(model.complete(&request()).unwrap().message.content, "two");
        match model.complete(&request()) {
            Err(GatewayError::ScriptExhausted { served }) => assert_eq!(served, 2),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn empty_script_is_rejected() {
        assert!(ScriptedModel::new(vec![]).is_err());
    }
}
