//! Scripted chat-completion backend for tests and demos.
//!
//! Replies are looked up by a fingerprint of the target model and the text
//! of the request's last message, so the same tool call can be answered
//! differently by the small and the large model. Every received body is
//! recorded.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use avr_core::pool::ModelProfile;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use crate::backend::{Backend, BackendError};

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Completion {
        content: String,
        /// Sent only when the request asks for logprobs.
        logprobs: Option<Vec<f64>>,
    },
    /// A completion that omits logprobs even when asked for them.
    NoLogprobs { content: String },
    Error { status: u16 },
}

impl MockReply {
    pub fn answer(content: impl Into<String>, logprobs: Vec<f64>) -> Self {
        MockReply::Completion {
            content: content.into(),
            logprobs: Some(logprobs),
        }
    }
}

pub fn fingerprint(model_id: &str, last_message_text: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    model_id
        .bytes()
        .chain([0u8])
        .chain(last_message_text.bytes())
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

fn last_message_text(body: &Value) -> String {
    let Some(content) = body.pointer("/messages").and_then(Value::as_array).and_then(|m| m.last()).and_then(|m| m.get("content")) else {
        return String::new();
    };
    match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter(|p| p.get("type").and_then(Value::as_str) == Some("text"))
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("\n"),
        _ => String::new(),
    }
}

pub fn request_fingerprint(body: &Value) -> u64 {
    let model = body.get("model").and_then(Value::as_str).unwrap_or_default();
    fingerprint(model, last_message_text(body).trim())
}

#[derive(Debug)]
pub struct MockBackend {
    script: Mutex<HashMap<u64, MockReply>>,
    default: MockReply,
    usage: (u64, u64),
    received: Mutex<Vec<Value>>,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend {
            script: Mutex::new(HashMap::new()),
            default: MockReply::answer("{\"action\": \"click\"}", vec![-0.05; 4]),
            usage: (1000, 0),
            received: Mutex::new(Vec::new()),
        }
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Usage reported on every completion.
    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.usage = (prompt_tokens, completion_tokens);
        self
    }

    pub fn with_default(mut self, reply: MockReply) -> Self {
        self.default = reply;
        self
    }

    /// Scripts the reply `model_id` gives to a request whose last message
    /// text is `description`.
    pub fn script(&self, model_id: &str, description: &str, reply: MockReply) {
        self.script
            .lock()
            .expect("mock script poisoned")
            .insert(fingerprint(model_id, description.trim()), reply);
    }

    pub fn received(&self) -> Vec<Value> {
        self.received.lock().expect("mock log poisoned").clone()
    }

    pub fn clear_received(&self) {
        self.received.lock().expect("mock log poisoned").clear();
    }

    /// Produces the reply for `body`: `Ok` with a completion body or `Err`
    /// with an HTTP status.
    pub fn respond(&self, body: &Value) -> Result<Value, u16> {
        self.received.lock().expect("mock log poisoned").push(body.clone());
        let reply = self
            .script
            .lock()
            .expect("mock script poisoned")
            .get(&request_fingerprint(body))
            .cloned()
            .unwrap_or_else(|| self.default.clone());
        let wants_logprobs = body.get("logprobs").and_then(Value::as_bool).unwrap_or(false);
        let (content, logprobs) = match reply {
            MockReply::Error { status } => return Err(status),
            MockReply::Completion { content, logprobs } => (content, logprobs.filter(|_| wants_logprobs)),
            MockReply::NoLogprobs { content } => (content, None),
        };
        let mut choice = json!({
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop"
        });
        if let Some(lp) = logprobs {
            let tokens: Vec<Value> = lp
                .iter()
                .enumerate()
                .map(|(i, l)| json!({"token": format!("t{i}"), "logprob": l}))
                .collect();
            choice["logprobs"] = json!({ "content": tokens });
        }
        Ok(json!({
            "id": format!("mock-{:016x}", request_fingerprint(body)),
            "object": "chat.completion",
            "model": body.get("model").cloned().unwrap_or(Value::Null),
            "choices": [choice],
            "usage": {
                "prompt_tokens": self.usage.0,
                "completion_tokens": self.usage.1,
                "total_tokens": self.usage.0 + self.usage.1
            }
        }))
    }
}

#[async_trait]
impl Backend for MockBackend {
    async fn complete(&self, model: &ModelProfile, body: Value) -> Result<Value, BackendError> {
        self.respond(&body).map_err(|status| BackendError::Status {
            model: model.model_id.clone(),
            status,
            body: "scripted failure".into(),
        })
    }
}

async fn mock_completion(State(mock): State<Arc<MockBackend>>, Json(body): Json<Value>) -> Response {
    match mock.respond(&body) {
        Ok(v) => Json(v).into_response(),
        Err(status) => (
            StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR),
            Json(json!({"error": {"message": "scripted failure"}})),
        )
            .into_response(),
    }
}

pub fn mock_router(mock: Arc<MockBackend>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(mock_completion))
        .with_state(mock)
}

/// Serves `mock` over HTTP on an ephemeral loopback port.
pub async fn serve_mock(mock: Arc<MockBackend>) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, mock_router(mock)).await;
    });
    Ok((addr, handle))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(model: &str, text: &str, logprobs: bool) -> Value {
        json!({"model": model, "logprobs": logprobs, "messages": [{"role": "user", "content": [{"type": "text", "text": text}]}]})
    }

    #[test]
    fn scripted_by_model_and_text() {
        let m = MockBackend::new();
        m.script("small", "open file", MockReply::answer("a", vec![-0.6]));
        m.script("small", "save", MockReply::Error { status: 500 });
        let r = m.respond(&body("small", "open file", true)).unwrap();
        assert_eq!(r["choices"][0]["logprobs"]["content"][0]["logprob"], json!(-0.6));
        assert!(m.respond(&body("large", "open file", true)).unwrap()["choices"][0]["message"]["content"] != json!("a"));
        assert_eq!(m.respond(&body("small", "save", true)), Err(500));
        assert_eq!(m.received().len(), 3);
    }

    #[test]
    fn logprobs_only_when_requested() {
        let m = MockBackend::new();
        let r = m.respond(&body("small", "x", false)).unwrap();
        assert!(r["choices"][0].get("logprobs").is_none());
    }
}
