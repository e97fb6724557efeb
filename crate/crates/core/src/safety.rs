//! Risk scoring against a contrastive safety KB and the override that pins
//! risky actions to the largest model.
//!
//! The risk score is the nearest dangerous prototype's cosine over both the
//! crop and the description embedding. It reuses the embeddings computed
//! for difficulty, so assessing risk costs no extra embedder calls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine, Embedding};
use crate::kb::{KbError, KbKind, Label, PrototypeKb};
use crate::outcome::RouteReason;
use crate::routing::{RouteDecision, Target};

pub const DEFAULT_TAU_RISK: f64 = 0.80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SafetyError {
    #[error("safety knowledge base has no dangerous prototypes")]
    EmptyDangerousSet,
    #[error("tau_risk must lie in (0, 1), got {0}")]
    BadTau(f64),
}

#[derive(Debug, Clone)]
pub struct SafetyKb(PrototypeKb);

impl SafetyKb {
    pub fn new(kb: PrototypeKb) -> Result<Self, KbError> {
        kb.check_kind(KbKind::Safety)?;
        Ok(SafetyKb(kb))
    }

    pub fn inner(&self) -> &PrototypeKb {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub risk: f64,
    pub tau_risk: f64,
    pub flagged: bool,
}

impl RiskAssessment {
    /// Flags strictly above the threshold.
    pub fn new(risk: f64, tau_risk: f64) -> Self {
        RiskAssessment {
            risk,
            tau_risk,
            flagged: risk > tau_risk,
        }
    }
}

pub fn assess_risk(
    crop_emb: &Embedding,
    desc_emb: &Embedding,
    kb: &SafetyKb,
    tau_risk: f64,
) -> Result<RiskAssessment, SafetyError> {
    if !(tau_risk > 0.0 && tau_risk < 1.0) {
        return Err(SafetyError::BadTau(tau_risk));
    }
    let risk = kb
        .0
        .select(Label::Dangerous, None)
        .map(|p| {
            let vis = cosine(crop_emb, &p.embedding).unwrap_or(-1.0);
            let txt = cosine(desc_emb, &p.embedding).unwrap_or(-1.0);
            vis.max(txt)
        })
        .reduce(f64::max)
        .ok_or(SafetyError::EmptyDangerousSet)?
        .clamp(0.0, 1.0);
    Ok(RiskAssessment::new(risk, tau_risk))
}

/// Flagged calls go to the largest model with guardrail verification
/// required; anything else keeps its base decision.
pub fn apply_safety_override(assessment: &RiskAssessment, base: RouteDecision) -> RouteDecision {
    if !assessment.flagged {
        return base;
    }
    RouteDecision {
        target: Target::Largest,
        reason: RouteReason::SafetyOverride,
        guardrail_required: true,
        ..base
    }
}
