//! Embedding service client.
//!
//! The service takes `POST {base}/v1/embed` with either `{"image": <data
//! URL>}` or `{"text": ...}` and answers `{"embedding": [...]}` with one
//! vector in the shared image/text space.

use std::time::Duration;

use async_trait::async_trait;
use avr_core::embedding::{Crop, EmbedError, Embedder, Embedding, SourceKind};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::wire::png_data_url;

#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    client: reqwest::Client,
    url: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, reqwest::Error> {
        Ok(RemoteEmbedder {
            client: reqwest::Client::builder().timeout(timeout).build()?,
            url: format!("{}/v1/embed", base_url.trim_end_matches('/')),
        })
    }

    async fn request(&self, body: Value, kind: SourceKind) -> Result<Embedding, EmbedError> {
        let unavailable = |e: reqwest::Error| EmbedError::Unavailable(e.to_string());
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .await
            .map_err(unavailable)?
            .error_for_status()
            .map_err(unavailable)?;
        let parsed: EmbedResponse = resp.json().await.map_err(unavailable)?;
        Embedding::new(parsed.embedding, kind)
    }
}

#[async_trait]
impl Embedder for RemoteEmbedder {
    async fn embed_image(&self, crop: &Crop) -> Result<Embedding, EmbedError> {
        self.request(json!({ "image": png_data_url(crop.pixels()) }), SourceKind::Image).await
    }

    async fn embed_text(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        self.request(json!({ "text": text }), SourceKind::Text).await
    }
}
