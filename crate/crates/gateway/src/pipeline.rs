//! The per-request routing pipeline behind the HTTP endpoints.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use avr_core::call::{validate_tool_call, CallError, Point};
use avr_core::confidence::{score_confidence, ProbeResult};
use avr_core::costmodel::{CallUsage, CostLedger, TierShares, TokenUsage};
use avr_core::difficulty::{estimate, DifficultyKb};
use avr_core::embedding::{extract_crop, EmbedError, Embedder};
use avr_core::kb::PrototypeKb;
use avr_core::memory::{feedback_memory_id, inject, record_outcome, CallContext, Feedback, MemoryError, MemoryStore};
use avr_core::money::Money;
use avr_core::outcome::{RouteReason, RoutingOutcome};
use avr_core::pool::{ModelPool, ModelProfile};
use avr_core::routing::{conclude, plan, Plan, RouteDecision, RoutingPolicy, Target};
use avr_core::safety::{assess_risk, SafetyKb};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{Backend, BackendError};
use crate::config::{GatewayConfig, MemoryConfig};
use crate::wire::{completion_info, forward_request, parse_tool_call, probe_request, RoutingHeaders, WireError, EXTENSION_FIELD};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("embedding service unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("{error}")]
    BackendUnavailable {
        error: BackendError,
        /// The routing decision reached before the backend failed.
        trace: Value,
    },
    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<WireError> for ApiError {
    fn from(e: WireError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl From<CallError> for ApiError {
    fn from(e: CallError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Unavailable(m) => ApiError::EmbedderUnavailable(m),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Kb(#[from] avr_core::kb::KbError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Everything the pipeline needs, already loaded.
pub struct GatewayParts {
    pub pool: ModelPool,
    pub policy: RoutingPolicy,
    pub confidence_floor: f64,
    pub tau_risk: f64,
    pub difficulty: DifficultyKb,
    pub safety: SafetyKb,
    pub embedder: Arc<dyn Embedder>,
    pub backend: Arc<dyn Backend>,
    pub memory: MemoryStore,
    pub memory_cfg: MemoryConfig,
    pub max_probe_tokens: u32,
}

struct OutcomeRecord {
    outcome: RoutingOutcome,
    context: CallContext,
    feedback_received: bool,
}

pub struct Gateway {
    parts: GatewayParts,
    ledger: Mutex<CostLedger>,
    outcomes: Mutex<HashMap<String, OutcomeRecord>>,
    next_id: AtomicU64,
}

/// A routed completion: the winning backend body with the extension field
/// added, and the decision record.
#[derive(Debug, Clone)]
pub struct Routed {
    pub body: Value,
    pub outcome: RoutingOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub outcome_id: String,
    pub success: bool,
    #[serde(default)]
    pub corrected_coords: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub outcome_id: String,
    /// `recorded` for new feedback, `duplicate` when already applied.
    pub status: String,
    pub memory_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub calls_total: u64,
    pub escalations: u64,
    pub probe_charges: u64,
    pub alpha: Option<f64>,
    pub mean_cost_per_call: Option<f64>,
    pub savings_fraction: Option<f64>,
    pub cost_total: Money,
    pub baseline_total: Money,
    pub tier_shares: TierShares,
    pub memory_entries: usize,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn usage_of(v: &Value) -> TokenUsage {
    let info = completion_info(v);
    TokenUsage::new(info.prompt_tokens, info.completion_tokens)
}

/// The routing metadata returned under the extension field.
pub fn extension(outcome_id: &str, outcome: &RoutingOutcome) -> Value {
    json!({
        "outcome_id": outcome_id,
        "difficulty": outcome.difficulty,
        "confidence": outcome.confidence,
        "risk": outcome.risk,
        "threshold": outcome.threshold_used,
        "tier": outcome.tier_chosen,
        "model": outcome.model_id,
        "reason": outcome.reason,
        "probe_charged": outcome.probe_charged,
        "guardrail_verification": outcome.guardrail_verification,
        "cost": outcome.cost,
    })
}

impl Gateway {
    pub fn new(parts: GatewayParts) -> Self {
        Gateway {
            parts,
            ledger: Mutex::new(CostLedger::new()),
            outcomes: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Loads the KBs and memory store named in `cfg`.
    pub fn from_config(
        cfg: &GatewayConfig,
        embedder: Arc<dyn Embedder>,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, SetupError> {
        cfg.validate()?;
        let memory = match &cfg.memory.path {
            Some(p) => MemoryStore::open(p)?,
            None => MemoryStore::in_memory(),
        };
        Ok(Gateway::new(GatewayParts {
            pool: cfg.pool.clone(),
            policy: cfg.routing,
            confidence_floor: cfg.confidence_floor,
            tau_risk: cfg.tau_risk,
            difficulty: DifficultyKb::new(PrototypeKb::load(&cfg.difficulty.kb_path)?)?,
            safety: SafetyKb::new(PrototypeKb::load(&cfg.safety.kb_path)?)?,
            embedder,
            backend,
            memory,
            memory_cfg: cfg.memory.clone(),
            max_probe_tokens: cfg.max_probe_tokens,
        }))
    }

    pub fn pool(&self) -> &ModelPool {
        &self.parts.pool
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.parts.memory
    }

    fn model(&self, target: Target) -> &ModelProfile {
        match target {
            Target::Smallest => self.parts.pool.smallest(),
            Target::Largest => self.parts.pool.largest(),
        }
    }

    /// Runs the probe; `None` when the backend failed or sent no usable
    /// logprobs.
    async fn probe(&self, body: Value) -> (Option<f64>, Option<Value>) {
        let small = self.parts.pool.smallest();
        let resp = match self.parts.backend.complete(small, body).await {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!(error = %e, "probe failed, escalating");
                return (None, None);
            }
        };
        let info = completion_info(&resp);
        let score = info
            .logprobs
            .ok_or_else(|| "no logprobs".to_string())
            .and_then(|lp| ProbeResult::new(info.content, lp).map_err(|e| e.to_string()))
            .and_then(|p| score_confidence(&p, self.parts.confidence_floor).map_err(|e| e.to_string()));
        match score {
            Ok(s) => (Some(s.value), Some(resp)),
            Err(reason) => {
                tracing::warn!(%reason, "malformed probe response, escalating");
                (None, Some(resp))
            }
        }
    }

    pub async fn handle_completion(&self, body: Value, headers: &RoutingHeaders) -> Result<Routed, ApiError> {
        let p = &self.parts;
        let call = validate_tool_call(parse_tool_call(&body, headers)?, &p.pool)?;
        let crop = extract_crop(&call.screenshot, call.coords)?;
        let crop_emb = p.embedder.embed_image(&crop).await?;
        let desc_emb = p.embedder.embed_text(&call.description).await?;

        let risk = assess_risk(&crop_emb, &desc_emb, &p.safety, p.tau_risk).map_err(|e| ApiError::Internal(e.to_string()))?;
        let est = estimate(&crop_emb, &desc_emb, &p.difficulty, &p.policy.cutoffs)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        let outcome_id = format!("call-{}", self.next_id.fetch_add(1, Ordering::Relaxed));

        let mut memory_block = None;
        let mut probe_usage = None;
        let mut probe_body = None;
        let decision: RouteDecision = match plan(&p.policy, &risk, &est) {
            Plan::Decided(d) => d,
            Plan::Probe { threshold } => {
                let memories = p.memory.retrieve(&call.app_id, &desc_emb, p.memory_cfg.k);
                let augmented = inject(&call, &memories, p.memory_cfg.token_budget);
                let request = probe_request(&body, &p.pool.smallest().model_id, &augmented, p.max_probe_tokens);
                memory_block = augmented.memory_block;
                let (confidence, resp) = self.probe(request).await;
                probe_usage = Some(resp.as_ref().map(usage_of).unwrap_or_default());
                probe_body = resp;
                conclude(threshold, confidence)
            }
        };

        let model = self.model(decision.target);
        let mut outcome = RoutingOutcome {
            call_ref: outcome_id.clone(),
            difficulty: est.d,
            confidence: decision.confidence,
            risk: risk.risk,
            threshold_used: decision.threshold,
            tier_chosen: model.tier,
            model_id: model.model_id.clone(),
            reason: decision.reason,
            probe_charged: decision.probe_charged,
            guardrail_verification: decision.guardrail_required,
            cost: Money::ZERO,
            response: String::new(),
        };

        let (winner, usage) = if decision.reason == RouteReason::ConfidentProbe {
            let resp = probe_body.expect("accepted probes have a body");
            (resp, CallUsage::probe_only(probe_usage.unwrap_or_default()))
        } else {
            let mut request = forward_request(&body, &model.model_id);
            if decision.reason == RouteReason::LowConfidenceEscalation && p.memory_cfg.inject_on_escalation {
                if let (Some(block), Some(msgs)) = (&memory_block, request["messages"].as_array_mut()) {
                    let at = msgs.len().saturating_sub(1);
                    msgs.insert(at, json!({"role": "system", "content": block}));
                }
            }
            let resp = p.backend.complete(model, request).await.map_err(|error| ApiError::BackendUnavailable {
                error,
                trace: extension(&outcome_id, &outcome),
            })?;
            let generation = usage_of(&resp);
            let usage = match probe_usage {
                Some(pu) => CallUsage::probed_then(pu, generation),
                None => CallUsage::generation_only(generation),
            };
            (resp, usage)
        };

        outcome.response = completion_info(&winner).content;
        outcome.cost = self
            .ledger
            .lock()
            .expect("ledger poisoned")
            .charge(&outcome, &usage, &p.pool)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        debug_assert!(outcome.check(p.pool.largest().tier).is_ok());

        let mut body = winner;
        if let Some(obj) = body.as_object_mut() {
            obj.insert(EXTENSION_FIELD.into(), extension(&outcome_id, &outcome));
        }
        tracing::info!(
            outcome = %outcome_id,
            reason = %outcome.reason,
            tier = outcome.tier_chosen,
            d = outcome.difficulty,
            confidence = ?outcome.confidence,
            "routed"
        );
        self.outcomes.lock().expect("outcome registry poisoned").insert(
            outcome_id,
            OutcomeRecord {
                outcome: outcome.clone(),
                context: CallContext::from_call(&call, desc_emb),
                feedback_received: false,
            },
        );
        Ok(Routed { body, outcome })
    }

    pub fn handle_feedback(&self, req: &FeedbackRequest) -> Result<FeedbackAck, ApiError> {
        let mut outcomes = self.outcomes.lock().expect("outcome registry poisoned");
        let record = outcomes
            .get_mut(&req.outcome_id)
            .ok_or_else(|| ApiError::UnknownOutcome(req.outcome_id.clone()))?;
        let ack = |status: &str| FeedbackAck {
            outcome_id: req.outcome_id.clone(),
            status: status.into(),
            memory_id: feedback_memory_id(&req.outcome_id),
        };
        if record.feedback_received {
            return Ok(ack("duplicate"));
        }
        let feedback = Feedback {
            success: Some(req.success),
            corrected_coords: req.corrected_coords,
        };
        match record_outcome(&self.parts.memory, &record.outcome, &record.context, &feedback, unix_now()) {
            Ok(_) => {
                record.feedback_received = true;
                Ok(ack("recorded"))
            }
            Err(MemoryError::DuplicateId(_)) => {
                record.feedback_received = true;
                Ok(ack("duplicate"))
            }
            Err(e) => Err(ApiError::Internal(e.to_string())),
        }
    }

    pub fn metrics(&self) -> MetricsReport {
        let ledger = self.ledger.lock().expect("ledger poisoned").clone();
        let report = ledger.report().ok();
        MetricsReport {
            calls_total: ledger.calls_total,
            escalations: ledger.escalations,
            probe_charges: ledger.probe_charges,
            alpha: report.as_ref().map(|r| r.alpha),
            mean_cost_per_call: report.as_ref().map(|r| r.mean_cost_per_call),
            savings_fraction: report.as_ref().and_then(|r| r.savings_fraction),
            cost_total: ledger.cost_accumulated,
            baseline_total: ledger.baseline_accumulated,
            tier_shares: ledger.tier_shares(),
            memory_entries: self.parts.memory.len(),
        }
    }

    /// A copy of the ledger, for callers that need the raw counters.
    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().expect("ledger poisoned").clone()
    }
}
