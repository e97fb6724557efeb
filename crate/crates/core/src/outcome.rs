//! The decision record attached to every routed call.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteReason {
    EasyPreroute,
    ConfidentProbe,
    LowConfidenceEscalation,
    HardPreroute,
    SafetyOverride,
}

impl RouteReason {
    pub const ALL: [RouteReason; 5] = [
        RouteReason::EasyPreroute,
        RouteReason::ConfidentProbe,
        RouteReason::LowConfidenceEscalation,
        RouteReason::HardPreroute,
        RouteReason::SafetyOverride,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RouteReason::EasyPreroute => "easy_preroute",
            RouteReason::ConfidentProbe => "confident_probe",
            RouteReason::LowConfidenceEscalation => "low_confidence_escalation",
            RouteReason::HardPreroute => "hard_preroute",
            RouteReason::SafetyOverride => "safety_override",
        }
    }
}

impl fmt::Display for RouteReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OutcomeViolation {
    #[error("safety override routed to tier {got}, highest tier is {top}")]
    OverrideNotTop { got: u32, top: u32 },
    #[error("confident probe accepted {confidence:?} below threshold {threshold}")]
    AcceptedBelowThreshold { confidence: Option<f64>, threshold: f64 },
    #[error("low-confidence escalation without a probe charge")]
    EscalationWithoutProbe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    /// Identifier of the routed call, used for feedback.
    pub call_ref: String,
    pub difficulty: f64,
    /// Absent when the probe was skipped.
    pub confidence: Option<f64>,
    pub risk: f64,
    pub threshold_used: f64,
    pub tier_chosen: u32,
    pub model_id: String,
    pub reason: RouteReason,
    pub probe_charged: bool,
    pub guardrail_verification: bool,
    pub cost: Money,
    #[serde(default)]
    pub response: String,
}

impl RoutingOutcome {
    pub fn check(&self, top_tier: u32) -> Result<(), OutcomeViolation> {
        match self.reason {
            RouteReason::SafetyOverride if self.tier_chosen != top_tier => Err(OutcomeViolation::OverrideNotTop {
                got: self.tier_chosen,
                top: top_tier,
            }),
            RouteReason::ConfidentProbe if !self.confidence.is_some_and(|c| c >= self.threshold_used) => {
                Err(OutcomeViolation::AcceptedBelowThreshold {
                    confidence: self.confidence,
                    threshold: self.threshold_used,
                })
            }
            RouteReason::LowConfidenceEscalation if !self.probe_charged => Err(OutcomeViolation::EscalationWithoutProbe),
            _ => Ok(()),
        }
    }
}
