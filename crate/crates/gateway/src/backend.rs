//! Clients for the chat-completion backends of the pool.

use std::time::Duration;

use async_trait::async_trait;
use avr_core::pool::ModelProfile;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend {model} unreachable: {reason}")]
    Unavailable { model: String, reason: String },
    #[error("backend {model} answered {status}: {body}")]
    Status { model: String, status: u16, body: String },
    #[error("backend {model} sent an unreadable body: {reason}")]
    BadBody { model: String, reason: String },
}

/// Sends a chat-completion body to one pool member and returns its reply.
#[async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, model: &ModelProfile, body: Value) -> Result<Value, BackendError>;
}

/// Plain HTTP client against OpenAI-compatible endpoints. A model's
/// `endpoint` is its base URL; requests go to `{endpoint}/v1/chat/completions`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Result<Self, reqwest::Error> {
        Ok(HttpBackend {
            client: reqwest::Client::builder().timeout(timeout).build()?,
        })
    }
}

pub fn completions_url(endpoint: &str) -> String {
    format!("{}/v1/chat/completions", endpoint.trim_end_matches('/'))
}

#[async_trait]
impl Backend for HttpBackend {
    async fn complete(&self, model: &ModelProfile, body: Value) -> Result<Value, BackendError> {
        let name = || model.model_id.clone();
        let resp = self
            .client
            .post(completions_url(&model.endpoint))
            .json(&body)
            .send()
            .await
            .map_err(|e| BackendError::Unavailable {
                model: name(),
                reason: e.to_string(),
            })?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(BackendError::Status {
                model: name(),
                status: status.as_u16(),
                body,
            });
        }
        resp.json::<Value>().await.map_err(|e| BackendError::BadBody {
            model: name(),
            reason: e.to_string(),
        })
    }
}
