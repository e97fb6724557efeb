//! Logprob confidence scoring for small-model probes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FLOOR: f64 = -3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfidenceError {
    #[error("probe returned no tokens")]
    EmptyProbe,
    #[error("normalisation floor must be negative, got {0}")]
    NonNegativeFloor(f64),
    #[error("token {index} has logprob {value}; logprobs must be finite and <= 0")]
    InvalidLogprob { index: usize, value: f64 },
    #[error("{weights} weights for {tokens} tokens")]
    WeightShapeMismatch { weights: usize, tokens: usize },
    #[error("weights must be non-negative and not all zero")]
    DegenerateWeights,
}

/// Output of a non-streaming, logprob-enabled probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub output_text: String,
    token_logprobs: Vec<f64>,
}

impl ProbeResult {
    /// Natural-log token probabilities; each must be finite and <= 0.
    pub fn new(output_text: impl Into<String>, token_logprobs: Vec<f64>) -> Result<Self, ConfidenceError> {
        if let Some((index, &value)) = token_logprobs
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v > 0.0)
        {
            return Err(ConfidenceError::InvalidLogprob { index, value });
        }
        Ok(ProbeResult {
            output_text: output_text.into(),
            token_logprobs,
        })
    }

    pub fn token_logprobs(&self) -> &[f64] {
        &self.token_logprobs
    }

    pub fn token_count(&self) -> usize {
        self.token_logprobs.len()
    }

    pub fn mean_logprob(&self) -> Option<f64> {
        (!self.token_logprobs.is_empty())
            .then(|| self.token_logprobs.iter().sum::<f64>() / self.token_logprobs.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScore {
    pub mean_logprob: f64,
    pub floor: f64,
    pub value: f64,
}

impl ConfidenceScore {
    /// `(mean + |floor|) / |floor|`, clamped into [0, 1].
    pub fn from_mean(mean_logprob: f64, floor: f64) -> Result<Self, ConfidenceError> {
        if floor.is_nan() || floor >= 0.0 {
            return Err(ConfidenceError::NonNegativeFloor(floor));
        }
        let span = floor.abs();
        let value = ((mean_logprob + span) / span).clamp(0.0, 1.0);
        Ok(ConfidenceScore {
            mean_logprob,
            floor,
            value,
        })
    }
}

pub fn score_confidence(probe: &ProbeResult, floor: f64) -> Result<ConfidenceScore, ConfidenceError> {
    if floor.is_nan() || floor >= 0.0 {
        return Err(ConfidenceError::NonNegativeFloor(floor));
    }
    let mean = probe.mean_logprob().ok_or(ConfidenceError::EmptyProbe)?;
    ConfidenceScore::from_mean(mean, floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptSmall,
    Escalate,
}

/// Accept iff `value >= threshold`; a tie accepts.
pub fn decide(value: f64, threshold: f64) -> Decision {
    if value >= threshold {
        Decision::AcceptSmall
    } else {
        Decision::Escalate
    }
}

/// Weighted mean logprob. Routing always uses uniform weights; this is the
/// seam for weighting coordinate tokens more heavily than format tokens.
pub fn aggregate_weighted(probe: &ProbeResult, weights: &[f64]) -> Result<f64, ConfidenceError> {
    if weights.len() != probe.token_count() {
        return Err(ConfidenceError::WeightShapeMismatch {
            weights: weights.len(),
            tokens: probe.token_count(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(ConfidenceError::DegenerateWeights);
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(ConfidenceError::DegenerateWeights);
    }
    let weighted: f64 = probe.token_logprobs.iter().zip(weights).map(|(l, w)| l * w).sum();
    Ok(weighted / total)
}
