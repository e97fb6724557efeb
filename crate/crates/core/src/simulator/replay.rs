//! Replay of a recorded session with fixed per-turn confidences.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::SimReport;
use super::{SimError, TraceRecord};
use crate::confidence::{decide, Decision};
use crate::costmodel::{savings, CallUsage, CostLedger, CostParams, TokenUsage};
use crate::money::Money;
use crate::outcome::{RouteReason, RoutingOutcome};
use crate::pool::ModelPool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRates {
    pub pool: ModelPool,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// What the session would have cost on the largest model alone, in
    /// dollars; per-turn token counts are sized to match it.
    pub baseline_total: f64,
    /// Escalation rate reported elsewhere for this session, if any. A
    /// mismatch is noted in the report.
    #[serde(default)]
    pub reference_alpha: Option<f64>,
}

fn default_threshold() -> f64 {
    0.85
}

impl ReplayRates {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let r: ReplayRates = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        if r.baseline_total.is_nan() || r.baseline_total <= 0.0 {
            return Err(SimError::Invalid("baseline_total must be positive".into()));
        }
        if !(0.0..=1.0).contains(&r.threshold) {
            return Err(SimError::Invalid("threshold must be in [0, 1]".into()));
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Uniform input tokens per turn for `turns` turns.
    pub fn tokens_per_turn(&self, turns: usize) -> u64 {
        let per_token = self.pool.largest().input_price.per_token().picos();
        let baseline = Money::from_dollars(self.baseline_total).picos();
        ((baseline as f64) / (turns as f64 * per_token as f64)).round() as u64
    }
}

/// Routes every turn on its recorded confidence against the fixed
/// threshold. Turns without a confidence escalate.
pub fn run_openclaw_replay(name: &str, trace: &[TraceRecord], rates: &ReplayRates) -> Result<SimReport, SimError> {
    if trace.is_empty() {
        return Err(SimError::MalformedTrace {
            line: 0,
            message: "trace has no records".into(),
        });
    }
    let small = rates.pool.smallest();
    let large = rates.pool.largest();
    let tokens = rates.tokens_per_turn(trace.len());
    let full = TokenUsage::new(tokens, 0);
    let probe = TokenUsage::new((tokens as f64 * small.probe_fraction).round() as u64, 0);

    let mut ledger = CostLedger::new();
    let mut reasons: BTreeMap<String, u64> = RouteReason::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect();
    for rec in trace {
        let confidence = rec.confidence.unwrap_or(0.0);
        let (model, reason, usage) = match decide(confidence, rates.threshold) {
            Decision::AcceptSmall => (small, RouteReason::ConfidentProbe, CallUsage::probe_only(full)),
            Decision::Escalate => (large, RouteReason::LowConfidenceEscalation, CallUsage::probed_then(probe, full)),
        };
        let outcome = RoutingOutcome {
            call_ref: rec.turn.to_string(),
            difficulty: rec.difficulty.unwrap_or(0.0),
            confidence: Some(confidence),
            risk: 0.0,
            threshold_used: rates.threshold,
            tier_chosen: model.tier,
            model_id: model.model_id.clone(),
            reason,
            probe_charged: true,
            guardrail_verification: false,
            cost: Money::ZERO,
            response: String::new(),
        };
        ledger.charge(&outcome, &usage, &rates.pool).expect("pool members are known");
        *reasons.get_mut(reason.as_str()).expect("all reasons present") += 1;
    }

    let report = ledger.report().expect("trace is non-empty");
    let params = CostParams::new(
        small.charge(tokens, 0).dollars(),
        large.charge(tokens, 0).dollars(),
        small.charge(probe.input, 0).dollars(),
    )
    .map_err(|e| SimError::Invalid(e.to_string()))?;
    let mut notes = Vec::new();
    if let Some(reference) = rates.reference_alpha {
        if (reference - report.alpha).abs() > 1e-9 {
            notes.push(format!(
                "measured escalation rate {:.3} differs from the reference rate {reference:.3} for this session",
                report.alpha
            ));
        }
    }
    Ok(SimReport {
        scenario: name.to_string(),
        n_calls: trace.len(),
        seed: 0,
        alpha: report.alpha,
        alpha_probed: report.alpha,
        alpha_direct: 0.0,
        effective_accuracy: None,
        mean_cost: report.mean_cost_per_call,
        savings: report.savings_fraction.expect("baseline is positive"),
        analytical_savings: savings(report.alpha, &params).expect("alpha is a fraction"),
        tier_shares: report.tier_shares,
        reasons,
        cost_total: report.cost_total,
        baseline_total: report.baseline_total,
        notes,
    })
}
