//! The OpenAI-compatible chat-completions subset the gateway understands.
//!
//! Bodies stay as `serde_json::Value` so unknown fields pass through to the
//! backends untouched. Routing inputs that have no place in the protocol
//! travel in `X-AVR-*` headers or in a top-level `avr` request object,
//! which is removed before forwarding.

use std::sync::Arc;

use avr_core::call::{ActionRecord, ActionType, Point, ToolCall};
use avr_core::memory::AugmentedPrompt;
use base64::Engine;
use image::RgbImage;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

pub const HEADER_SESSION: &str = "x-avr-session";
pub const HEADER_APP: &str = "x-avr-app";
pub const HEADER_TARGET: &str = "x-avr-target-xy";
pub const HEADER_ACTION: &str = "x-avr-action";

/// Name of the request and response extension field.
pub const EXTENSION_FIELD: &str = "avr";

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("request has no messages")]
    NoMessages,
    #[error("request has no image part")]
    NoImage,
    #[error("image part is not a base64 data URL")]
    BadImageUrl,
    #[error("cannot decode screenshot: {0}")]
    BadImage(String),
    #[error("request has no action description")]
    NoDescription,
    #[error("missing {0}")]
    MissingField(&'static str),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// Routing metadata that may accompany a request body.
#[derive(Debug, Default, Deserialize)]
struct RequestExtension {
    #[serde(default)]
    target_xy: Option<Point>,
    #[serde(default)]
    action_type: Option<ActionType>,
    #[serde(default)]
    history: Vec<ActionRecord>,
    #[serde(default)]
    session_id: Option<String>,
    #[serde(default)]
    app_id: Option<String>,
}

/// Header values relevant to routing, already extracted.
#[derive(Debug, Default, Clone)]
pub struct RoutingHeaders {
    pub session: Option<String>,
    pub app: Option<String>,
    pub target: Option<String>,
    pub action: Option<String>,
}

fn text_parts(content: &Value) -> Vec<&str> {
    match content {
        Value::String(s) => vec![s.as_str()],
        Value::Array(parts) => parts
            .iter()
            .filter(|p| p.get("type").and_then(Value::as_str) == Some("text"))
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect(),
        _ => vec![],
    }
}

fn image_url(content: &Value) -> Option<&str> {
    content.as_array()?.iter().rev().find_map(|p| {
        if p.get("type").and_then(Value::as_str) != Some("image_url") {
            return None;
        }
        let url = p.get("image_url")?;
        url.as_str().or_else(|| url.get("url").and_then(Value::as_str))
    })
}

fn decode_data_url(url: &str) -> Result<RgbImage, WireError> {
    let (meta, data) = url.split_once(',').ok_or(WireError::BadImageUrl)?;
    if !(meta.starts_with("data:") && meta.ends_with(";base64")) {
        return Err(WireError::BadImageUrl);
    }
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(data.trim())
        .map_err(|e| WireError::BadImage(e.to_string()))?;
    let img = image::load_from_memory(&bytes).map_err(|e| WireError::BadImage(e.to_string()))?;
    Ok(img.to_rgb8())
}

/// Encodes an image as a PNG data URL.
pub fn png_data_url(img: &RgbImage) -> String {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png).expect("encoding to memory");
    format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(buf.into_inner())
    )
}

/// Extracts the tool call from a request. The screenshot is the last image
/// in the conversation; the description is the text of the last message.
pub fn parse_tool_call(body: &Value, headers: &RoutingHeaders) -> Result<ToolCall, WireError> {
    let messages = body
        .get("messages")
        .and_then(Value::as_array)
        .filter(|m| !m.is_empty())
        .ok_or(WireError::NoMessages)?;
    let ext: RequestExtension = match body.get(EXTENSION_FIELD) {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| WireError::Invalid {
            field: EXTENSION_FIELD,
            reason: e.to_string(),
        })?,
        None => RequestExtension::default(),
    };

    let url = messages
        .iter()
        .rev()
        .find_map(|m| m.get("content").and_then(image_url))
        .ok_or(WireError::NoImage)?;
    let screenshot = decode_data_url(url)?;

    let last = messages.last().and_then(|m| m.get("content")).unwrap_or(&Value::Null);
    let description = text_parts(last).join("\n").trim().to_string();
    if description.is_empty() {
        return Err(WireError::NoDescription);
    }

    let coords = match (&headers.target, ext.target_xy) {
        (Some(h), _) => h.parse::<Point>().map_err(|reason| WireError::Invalid {
            field: "X-AVR-Target-XY",
            reason,
        })?,
        (None, Some(p)) => p,
        (None, None) => return Err(WireError::MissingField("X-AVR-Target-XY")),
    };
    let action_type = match (&headers.action, ext.action_type) {
        (Some(h), _) => h.parse::<ActionType>().map_err(|reason| WireError::Invalid {
            field: "X-AVR-Action",
            reason,
        })?,
        (None, Some(a)) => a,
        (None, None) => ActionType::default(),
    };
    let session_id = headers
        .session
        .clone()
        .or(ext.session_id)
        .ok_or(WireError::MissingField("X-AVR-Session"))?;
    let app_id = headers.app.clone().or(ext.app_id).ok_or(WireError::MissingField("X-AVR-App"))?;

    Ok(ToolCall {
        screenshot: Arc::new(screenshot),
        history: ext.history,
        action_type,
        coords,
        description,
        app_id,
        session_id,
    })
}

/// The body forwarded to a backend: the extension object removed and the
/// model name set.
pub fn forward_request(original: &Value, model_id: &str) -> Value {
    let mut body = original.clone();
    if let Some(obj) = body.as_object_mut() {
        obj.remove(EXTENSION_FIELD);
        obj.insert("model".into(), Value::String(model_id.to_string()));
    }
    body
}

/// The probe sent to the small model: non-streaming, with token logprobs,
/// output capped, and the memory section inserted as a message just before
/// the action request.
pub fn probe_request(original: &Value, model_id: &str, injected: &AugmentedPrompt, max_probe_tokens: u32) -> Value {
    let mut body = forward_request(original, model_id);
    let obj = body.as_object_mut().expect("request bodies are objects");
    obj.insert("stream".into(), Value::Bool(false));
    obj.insert("logprobs".into(), Value::Bool(true));
    let cap = obj
        .get("max_tokens")
        .and_then(Value::as_u64)
        .map_or(max_probe_tokens as u64, |m| m.min(max_probe_tokens as u64));
    obj.insert("max_tokens".into(), json!(cap));
    if let (Some(block), Some(messages)) = (&injected.memory_block, obj.get_mut("messages").and_then(Value::as_array_mut)) {
        let at = messages.len().saturating_sub(1);
        messages.insert(at, json!({"role": "system", "content": block}));
    }
    body
}

/// What the gateway reads back from a completion.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionInfo {
    pub content: String,
    /// Token logprobs, absent when the backend sent none.
    pub logprobs: Option<Vec<f64>>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

pub fn completion_info(body: &Value) -> CompletionInfo {
    let choice = body.get("choices").and_then(|c| c.get(0));
    let content = choice
        .and_then(|c| c.pointer("/message/content"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let logprobs = choice
        .and_then(|c| c.pointer("/logprobs/content"))
        .and_then(Value::as_array)
        .and_then(|tokens| tokens.iter().map(|t| t.get("logprob").and_then(Value::as_f64)).collect::<Option<Vec<_>>>())
        .filter(|v| !v.is_empty());
    let usage = |k: &str| body.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    CompletionInfo {
        content,
        logprobs,
        prompt_tokens: usage("prompt_tokens"),
        completion_tokens: usage("completion_tokens"),
    }
}
