//! HTTP surface: the OpenAI-compatible completions endpoint plus feedback,
//! metrics and health.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{rejection::JsonRejection, State};
use axum::http::{HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tower::limit::ConcurrencyLimitLayer;

use crate::pipeline::{ApiError, FeedbackRequest, Gateway};
use crate::wire::{RoutingHeaders, HEADER_ACTION, HEADER_APP, HEADER_SESSION, HEADER_TARGET};

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::EmbedderUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::BackendUnavailable { .. } => StatusCode::BAD_GATEWAY,
            ApiError::UnknownOutcome(_) => StatusCode::NOT_FOUND,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"message": self.to_string(), "code": self.status().as_u16()});
        if let ApiError::BackendUnavailable { trace, .. } = &self {
            error["routing"] = trace.clone();
        }
        (self.status(), Json(json!({ "error": error }))).into_response()
    }
}

fn header(headers: &HeaderMap, name: &str) -> Option<String> {
    headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_owned)
}

pub fn routing_headers(headers: &HeaderMap) -> RoutingHeaders {
    RoutingHeaders {
        session: header(headers, HEADER_SESSION),
        app: header(headers, HEADER_APP),
        target: header(headers, HEADER_TARGET),
        action: header(headers, HEADER_ACTION),
    }
}

fn json_body<T>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn completions(
    State(gw): State<Arc<Gateway>>,
    headers: HeaderMap,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Response, ApiError> {
    let body = json_body(body)?;
    let routed = gw.handle_completion(body, &routing_headers(&headers)).await?;
    let o = &routed.outcome;
    let mut response = Json(routed.body).into_response();
    let out = response.headers_mut();
    let pairs = [
        ("x-avr-outcome", o.call_ref.clone()),
        ("x-avr-model", o.model_id.clone()),
        ("x-avr-tier", o.tier_chosen.to_string()),
        ("x-avr-reason", o.reason.to_string()),
        ("x-avr-difficulty", format!("{:.4}", o.difficulty)),
    ];
    for (name, value) in pairs {
        if let Ok(v) = HeaderValue::from_str(&value) {
            out.insert(HeaderName::from_static(name), v);
        }
    }
    Ok(response)
}

async fn feedback(
    State(gw): State<Arc<Gateway>>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let req = json_body(body)?;
    let ack = gw.handle_feedback(&req)?;
    Ok(Json(serde_json::to_value(ack).expect("ack serializes")))
}

async fn metrics(State(gw): State<Arc<Gateway>>) -> Json<Value> {
    Json(serde_json::to_value(gw.metrics()).expect("metrics serialize"))
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(gateway: Arc<Gateway>, max_concurrent: usize) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(completions))
        .route("/v1/feedback", post(feedback))
        .route("/metrics", get(metrics))
        .route("/healthz", get(healthz))
        .layer(ConcurrencyLimitLayer::new(max_concurrent.max(1)))
        .with_state(gateway)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(gateway: Arc<Gateway>, addr: SocketAddr, max_concurrent: usize) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    axum::serve(listener, router(gateway, max_concurrent))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Serves on an ephemeral loopback port in the background.
pub async fn spawn(
    gateway: Arc<Gateway>,
    max_concurrent: usize,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, router(gateway, max_concurrent)).await;
    });
    Ok((addr, handle))
}
