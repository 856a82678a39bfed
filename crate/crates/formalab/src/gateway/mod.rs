//! Uniform chat-with-tools interface over model providers.
//!
//! [`ChatModel`] is the one seam the agent controller and the judges see.
//! Implementations: [`scripted::ScriptedModel`] (test scripts),
//! [`replay::ReplayGateway`] (content-addressed fixtures, fail-closed),
//! [`live::LiveGateway`] (HTTP provider with retries and rate limiting),
//! and the deterministic synthetic models in [`stub`].

pub mod live;
pub mod replay;
pub mod scripted;
pub mod stub;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chat::Message;
use crate::tools::ToolSpec;

/// One orchestrator turn: everything the provider needs to produce the next
/// assistant message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatTurnRequest {
    pub model_id: String,
    pub history: Vec<Message>,
    pub tool_specs: Vec<ToolSpec>,
    /// Decoding hints (temperature etc.), passed through opaquely.
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub decoding: Value,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatTurnResponse {
    pub message: Message,
    #[serde(default)]
    pub usage: TokenUsage,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub provider_meta: Value,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("provider error after {attempts} attempts: {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("malformed provider payload: {message}; raw body: {raw}")]
    Decode { message: String, raw: String },
    #[error("replay fixture miss for key {key}")]
    FixtureMiss { key: String },
    #[error("scripted model exhausted after {served} responses")]
    ScriptExhausted { served: usize },
    #[error("gateway configuration error: {0}")]
    Configuration(String),
    #[error("response violates message contract: {0}")]
    Contract(#[from] crate::chat::MessageError),
}

/// A handle that can produce one assistant turn from a request.
pub trait ChatModel: Send + Sync {
    fn complete(&self, request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError>;
}

/// A model handle bound to a model identifier and decoding hints.
///
/// Distinct orchestrators and judges are just distinct `model_id`s over the
/// same gateway; there are no per-model code paths.
pub struct Orchestrator {
    pub model_id: String,
    pub decoding: Value,
    model: Box<dyn ChatModel>,
}

impl Orchestrator {
    pub fn new(model_id: impl Into<String>, model: Box<dyn ChatModel>) -> Self {
        Orchestrator { model_id: model_id.into(), decoding: Value::Null, model }
    }

    pub fn with_decoding(mut self, decoding: Value) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn complete(
        &self,
        history: Vec<Message>,
        tool_specs: Vec<ToolSpec>,
    ) -> Result<ChatTurnResponse, GatewayError> {
        let request = ChatTurnRequest {
            model_id: self.model_id.clone(),
            history,
            tool_specs,
            decoding: self.decoding.clone(),
        };
        let response = self.model.complete(&request)?;
        response.message.check()?;
        Ok(response)
    }
}

/// Wraps a model and appends every response verbatim to a JSONL log before
/// returning it.
pub struct LoggingModel<M> {
    inner: M,
    sink: Mutex<std::fs::File>,
    path: PathBuf,
}

impl<M: ChatModel> LoggingModel<M> {
    pub fn create(inner: M, path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let sink = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(LoggingModel { inner, sink: Mutex::new(sink), path })
    }

    pub fn log_path(&self) -> &std::path::Path {
        &self.path
    }
}

impl<M: ChatModel> ChatModel for LoggingModel<M> {
    fn complete(&self, request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError> {
        let response = self.inner.complete(request)?;
        let line = serde_json::to_string(&response).expect("responses serialize");
        {
            let mut sink = self.sink.lock().unwrap();
            let _ = writeln!(sink, "{line}");
        }
        Ok(response)
    }
}

/// Stable fixture key for a request: hash of model id, serialized history,
/// and tool specs, so replay is sensitive to any prompt change.
pub fn request_fixture_key(request: &ChatTurnRequest) -> String {
    let body = serde_json::json!({
        "model_id": request.model_id,
        "history": request.history,
        "tool_specs": request.tool_specs,
    });
    crate::net::canonical_hash(&body)
}
