//! Live provider gateway: OpenAI-style chat completions over HTTP with
//! bounded retries, backoff, and a global in-flight rate limit.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatModel, ChatTurnRequest, ChatTurnResponse, GatewayError, TokenUsage};
use crate::chat::{Message, Role, ToolCall};
use crate::net::count_network_op;
use crate::tools::{ArgKind, ToolSpec};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Additional attempts after the first call.
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, initial_backoff_ms: 500 }
    }
}

#[derive(Debug)]
pub struct TransportError {
    pub message: String,
    /// Transient errors (timeouts, 429, 5xx) are retried; the rest are not.
    pub transient: bool,
}

/// The wire seam, separated from retry/limit logic so tests can instrument it.
pub trait Transport: Send + Sync {
    fn post(&self, body: &Value) -> Result<Value, TransportError>;
}

/// Counting semaphore bounding concurrent in-flight provider requests.
pub struct RateLimiter {
    state: Mutex<usize>,
    freed: Condvar,
    capacity: usize,
}

impl RateLimiter {
    pub fn new(max_in_flight: usize) -> Self {
        let capacity = max_in_flight.max(1);
        RateLimiter { state: Mutex::new(capacity), freed: Condvar::new(), capacity }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn acquire(&self) -> LimiterPermit<'_> {
        let mut available = self.state.lock().unwrap();
        while *available == 0 {
            available = self.freed.wait(available).unwrap();
        }
        *available -= 1;
        LimiterPermit { limiter: self }
    }
}

struct LimiterPermit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for LimiterPermit<'_> {
    fn drop(&mut self) {
        *self.limiter.state.lock().unwrap() += 1;
        self.limiter.freed.notify_one();
    }
}

/// HTTP transport against an OpenAI-compatible chat completions endpoint.
/// Credentials come from the named environment variable.
pub struct HttpTransport {
    url: String,
    api_key_env: String,
    timeout: Duration,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key_env: &str) -> Self {
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        HttpTransport {
            url,
            api_key_env: api_key_env.to_string(),
            timeout: Duration::from_secs(120),
        }
    }
}

impl Transport for HttpTransport {
    fn post(&self, body: &Value) -> Result<Value, TransportError> {
        count_network_op();
        let key = std::env::var(&self.api_key_env).map_err(|_| TransportError {
            message: format!("credential variable {} is not set", self.api_key_env),
            transient: false,
        })?;
        let client = reqwest::blocking::Client::new();
        let response = client
            .post(&self.url)
            .bearer_auth(key)
            .json(body)
            .timeout(self.timeout)
            .send()
            .map_err(|e| TransportError {
                message: e.to_string(),
                transient: e.is_timeout() || e.is_connect(),
            })?;
        let status = response.status();
        let text = response.text().map_err(|e| TransportError {
            message: e.to_string(),
            transient: true,
        })?;
        if !status.is_success() {
            return Err(TransportError {
                message: format!("HTTP {status}: {text}"),
                transient: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError {
            message: format!("non-JSON provider body: {e}"),
            transient: false,
        })
    }
}

pub struct LiveGateway<T> {
    transport: T,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl LiveGateway<HttpTransport> {
    pub fn new(base_url: &str, api_key_env: &str) -> Self {
        LiveGateway::with_transport(HttpTransport::new(base_url, api_key_env))
    }
}

impl<T: Transport> LiveGateway<T> {
    pub fn with_transport(transport: T) -> Self {
        LiveGateway {
            transport,
            retry: RetryPolicy::default(),
            limiter: RateLimiter::new(8),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, max_in_flight: usize) -> Self {
        self.limiter = RateLimiter::new(max_in_flight);
        self
    }
}

fn tool_schema(spec: &ToolSpec) -> Value {
    let mut properties = serde_json::Map::new();
    let mut required = Vec::new();
    for arg in &spec.argument_schema {
        let ty = match arg.kind {
            ArgKind::String => json!({ "type": "string" }),
            ArgKind::Bool => json!({ "type": "boolean" }),
            ArgKind::Integer => json!({ "type": "integer" }),
            ArgKind::StringList => json!({ "type": "array", "items": { "type": "string" } }),
        };
        properties.insert(arg.name.clone(), ty);
        if arg.required {
            required.push(Value::String(arg.name.clone()));
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": spec.name,
            "description": spec.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
            },
        },
    })
}

fn wire_message(message: &Message) -> Value {
    let role = match message.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut out = serde_json::Map::new();
    out.insert("role".into(), json!(role));
    out.insert("content".into(), json!(message.content));
    if !message.tool_calls.is_empty() {
        let calls: Vec<Value> = message
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.call_id,
                    "type": "function",
                    "function": {
                        "name": c.tool_name,
                        "arguments": c.arguments.to_string(),
                    },
                })
            })
            .collect();
        out.insert("tool_calls".into(), Value::Array(calls));
    }
    if let Some(reply) = &message.in_reply_to {
        out.insert("tool_call_id".into(), json!(reply));
    }
    Value::Object(out)
}

fn build_body(request: &ChatTurnRequest) -> Value {
    let mut body = serde_json::Map::new();
    body.insert("model".into(), json!(request.model_id));
    body.insert(
        "messages".into(),
        Value::Array(request.history.iter().map(wire_message).collect()),
    );
    if !request.tool_specs.is_empty() {
        body.insert(
            "tools".into(),
            Value::Array(request.tool_specs.iter().map(tool_schema).collect()),
        );
    }
    // Deterministic decoding unless the caller overrides it.
    body.insert("temperature".into(), json!(0.0));
    if let Value::Object(hints) = &request.decoding {
        for (k, v) in hints {
            body.insert(k.clone(), v.clone());
        }
    }
    Value::Object(body)
}

fn decode_response(raw: Value) -> Result<ChatTurnResponse, GatewayError> {
    let err = |message: &str, raw: &Value| GatewayError::Decode {
        message: message.to_string(),
        raw: raw.to_string(),
    };
    let choice = raw
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| err("missing choices[0]", &raw))?;
    let message = choice
        .get("message")
        .ok_or_else(|| err("missing choices[0].message", &raw))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for call in calls {
            let call_id = call
                .get("id")
                .and_then(Value::as_str)
                .ok_or_else(|| err("tool call without id", &raw))?
                .to_string();
            let function = call
                .get("function")
                .ok_or_else(|| err("tool call without function", &raw))?;
            let tool_name = function
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| err("tool call without name", &raw))?
                .to_string();
            let arguments_text = function
                .get("arguments")
                .and_then(Value::as_str)
                .unwrap_or("{}");
            let arguments: Value = serde_json::from_str(arguments_text)
                .map_err(|_| err("tool call arguments are not JSON", &raw))?;
            tool_calls.push(ToolCall { call_id, tool_name, arguments });
        }
    }
    let usage = TokenUsage {
        prompt_tokens: raw
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        completion_tokens: raw
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ChatTurnResponse {
        message: Message {
            role: Role::Assistant,
            content,
            tool_calls,
            in_reply_to: None,
        },
        usage,
        provider_meta: raw,
    })
}

impl<T: Transport> ChatModel for LiveGateway<T> {
    fn complete(&self, request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError> {
        let body = build_body(request);
        let mut backoff = self.retry.initial_backoff_ms;
        let attempts_allowed = self.retry.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 1..=attempts_allowed {
            let _permit = self.limiter.acquire();
            match self.transport.post(&body) {
                Ok(raw) => return decode_response(raw),
                Err(e) if e.transient && attempt < attempts_allowed => {
                    last_error = e.message;
                    std::thread::sleep(Duration::from_millis(backoff));
                    backoff = backoff.saturating_mul(2);
                }
                Err(e) => {
                    return Err(GatewayError::Exhausted {
                        attempts: attempt,
                        message: e.message,
                    })
                }
            }
        }
        Err(GatewayError::Exhausted { attempts: attempts_allowed, message: last_error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct FlakyTransport {
        calls: std::sync::Arc<AtomicU32>,
        succeed_after: u32,
    }

    impl FlakyTransport {
        fn new(succeed_after: u32) -> (Self, std::sync::Arc<AtomicU32>) {
            let calls = std::sync::Arc::new(AtomicU32::new(0));
            (FlakyTransport { calls: calls.clone(), succeed_after }, calls)
        }
    }

    impl Transport for FlakyTransport {
        fn post(&self, _body: &Value) -> Result<Value, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
            if n <= self.succeed_after {
                Err(TransportError { message: format!("attempt {n} failed"), transient: true })
            } else {
                Ok(json!({
                    "choices": [{ "message": { "content": "ok" } }],
                    "usage": { "prompt_tokens": 5, "completion_tokens": 2 },
                }))
            }
        }
    }

    fn request() -> ChatTurnRequest {
        ChatTurnRequest {
            model_id: "m".into(),
            history: vec![Message::user("hi")],
            tool_specs: vec![],
            decoding: Value::Null,
        }
    }

    #[test]
    fn retries_transient_errors_up_to_cap() {
        let (transport, _calls) = FlakyTransport::new(2);
        let gateway = LiveGateway::with_transport(transport)
            .with_retry(RetryPolicy { max_retries: 3, initial_backoff_ms: 1 });
        let resp = gateway.complete(&request()).unwrap();
        assert_eq!(resp.message.content, "ok");
        assert_eq!(resp.usage.prompt_tokens, 5);
    }

    #[test]
    fn exhausts_after_retry_cap() {
        let (transport, _calls) = FlakyTransport::new(100);
        let gateway = LiveGateway::with_transport(transport)
            .with_retry(RetryPolicy { max_retries: 2, initial_backoff_ms: 1 });
        match gateway.complete(&request()) {
            Err(GatewayError::Exhausted { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn call_count_bounded_by_retry_cap() {
        let (transport, calls) = FlakyTransport::new(100);
        let gateway = LiveGateway::with_transport(transport)
            .with_retry(RetryPolicy { max_retries: 2, initial_backoff_ms: 1 });
        let _ = gateway.complete(&request());
        // 1 initial call + 2 retries, never more.
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn decodes_tool_calls_from_wire_format() {
        let raw = json!({
            "choices": [{
                "message": {
                    "content": "",
                    "tool_calls": [{
                        "id": "call_1",
                        "type": "function",
                        "function": {
                            "name": "lean_inspect_name",
                            "arguments": "{\"name\": \"Polynomial.natDegree\"}",
                        },
                    }],
                },
            }],
        });
        let resp = decode_response(raw).unwrap();
        assert_eq!(resp.message.tool_calls.len(), 1);
        assert_eq!(resp.message.tool_calls[0].tool_name, "lean_inspect_name");
        assert_eq!(
            resp.message.tool_calls[0].arguments["name"],
            "Polynomial.natDegree"
        );
    }

    #[test]
    fn malformed_payload_carries_raw_body() {
        let raw = json!({ "unexpected": true });
        match decode_response(raw) {
            Err(GatewayError::Decode { raw, .. }) => assert!(raw.contains("unexpected")),
            other => panic!("expected decode error, got {other:?}"),
        }
    }

    #[test]
    fn body_includes_tools_and_deterministic_decoding() {
        let mut req = request();
        req.tool_specs = crate::tools::specs_for_config("111".parse().unwrap());
        let body = build_body(&req);
        assert_eq!(body["temperature"], json!(0.0));
        assert_eq!(body["tools"].as_array().unwrap().len(), 6);
    }
}
