//! The per-call routing policy: safety check, then difficulty pre-routing,
//! then the confidence probe against the adaptive threshold.
//!
//! The policy is split at the probe so callers with an asynchronous backend
//! can run it between [`plan`] and [`conclude`]. [`route`] glues the two
//! halves together for synchronous callers such as the simulator.

use serde::{Deserialize, Serialize};

use crate::confidence::{decide, Decision};
use crate::difficulty::{adaptive_threshold, preroute, BandCutoffs, DifficultyEstimate, Preroute, ThresholdConfig};
use crate::outcome::RouteReason;
use crate::safety::{apply_safety_override, RiskAssessment};

/// Which end of the pool a decision lands on. The policy only ever uses
/// the cheapest and the most capable member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub target: Target,
    pub reason: RouteReason,
    pub probe_charged: bool,
    pub guardrail_required: bool,
    /// Probe confidence, when a probe ran.
    pub confidence: Option<f64>,
    /// The adaptive threshold for this call, whether or not it was used.
    pub threshold: f64,
}

impl RouteDecision {
    pub fn accepted(threshold: f64, confidence: f64) -> Self {
        RouteDecision {
            target: Target::Smallest,
            reason: RouteReason::ConfidentProbe,
            probe_charged: true,
            guardrail_required: false,
            confidence: Some(confidence),
            threshold,
        }
    }

    pub fn escalated(threshold: f64, confidence: f64) -> Self {
        RouteDecision {
            target: Target::Largest,
            reason: RouteReason::LowConfidenceEscalation,
            probe_charged: true,
            guardrail_required: false,
            confidence: Some(confidence),
            threshold,
        }
    }

    /// A decision reached without probing.
    pub fn direct(target: Target, reason: RouteReason, threshold: f64) -> Self {
        RouteDecision {
            target,
            reason,
            probe_charged: false,
            guardrail_required: false,
            confidence: None,
            threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub cutoffs: BandCutoffs,
    #[serde(default = "default_preroute")]
    pub preroute_enabled: bool,
}

fn default_preroute() -> bool {
    true
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        RoutingPolicy {
            thresholds: ThresholdConfig::default(),
            cutoffs: BandCutoffs::default(),
            preroute_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Plan {
    Decided(RouteDecision),
    /// Probe the small model and compare against `threshold`.
    Probe { threshold: f64 },
}

/// Everything that can be decided before a probe.
pub fn plan(policy: &RoutingPolicy, risk: &RiskAssessment, est: &DifficultyEstimate) -> Plan {
    let threshold = adaptive_threshold(est.d.clamp(0.0, 1.0), &policy.thresholds)
        .expect("clamped difficulty is in range");
    if risk.flagged {
        // the base is whatever pre-routing alone would pick; never a probe
        let base = match preroute(est, policy.preroute_enabled) {
            Preroute::ToSmallSkipProbe => RouteDecision::direct(Target::Smallest, RouteReason::EasyPreroute, threshold),
            _ => RouteDecision::direct(Target::Largest, RouteReason::HardPreroute, threshold),
        };
        return Plan::Decided(apply_safety_override(risk, base));
    }
    match preroute(est, policy.preroute_enabled) {
        Preroute::ToSmallSkipProbe => Plan::Decided(RouteDecision::direct(
            Target::Smallest,
            RouteReason::EasyPreroute,
            threshold,
        )),
        Preroute::ToLargeSkipProbe => Plan::Decided(RouteDecision::direct(
            Target::Largest,
            RouteReason::HardPreroute,
            threshold,
        )),
        Preroute::Probe => Plan::Probe { threshold },
    }
}

/// Finishes a probed call. A missing confidence (failed or malformed probe)
/// counts as zero, so probe failures always escalate.
pub fn conclude(threshold: f64, confidence: Option<f64>) -> RouteDecision {
    let value = confidence.unwrap_or(0.0);
    match decide(value, threshold) {
        Decision::AcceptSmall => RouteDecision::accepted(threshold, value),
        Decision::Escalate => RouteDecision::escalated(threshold, value),
    }
}

/// Runs the whole policy; `probe` is only invoked when the plan asks for it.
pub fn route(
    policy: &RoutingPolicy,
    risk: &RiskAssessment,
    est: &DifficultyEstimate,
    probe: impl FnOnce() -> Option<f64>,
) -> RouteDecision {
    match plan(policy, risk, est) {
        Plan::Decided(d) => d,
        Plan::Probe { threshold } => conclude(threshold, probe()),
    }
}
