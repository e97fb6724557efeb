//! The model pool a gateway routes across.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::{Money, TokenPrice};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("pool is empty")]
    Empty,
    #[error("tier {tier} of {model} is not above the previous tier {previous}")]
    TierOrder { model: String, tier: u32, previous: u32 },
    #[error("capability of {model} ({capability}) is below the previous tier")]
    CapabilityOrder { model: String, capability: f64 },
    #[error("input price of {model} is below the previous tier")]
    PriceOrder { model: String },
    #[error("capability of {model} must lie in [0, 1], got {capability}")]
    CapabilityRange { model: String, capability: f64 },
    #[error("probe fraction of {model} must lie in (0, 1], got {fraction}")]
    ProbeFraction { model: String, fraction: f64 },
    #[error("no model at tier {0}")]
    NoSuchTier(u32),
}

fn default_probe_fraction() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

/// One member of the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub model_id: String,
    /// 1 is the cheapest tier.
    pub tier: u32,
    /// Latent capability threshold in [0, 1].
    pub capability: f64,
    /// Dollars per million input tokens.
    pub input_price: TokenPrice,
    /// Dollars per million output tokens.
    #[serde(default)]
    pub output_price: TokenPrice,
    /// Fraction of a full generation that a confidence probe costs.
    #[serde(default = "default_probe_fraction")]
    pub probe_fraction: f64,
    #[serde(default)]
    pub endpoint: String,
    /// Published grounding accuracy in percent; informational only.
    #[serde(default)]
    pub grounding_accuracy: f64,
    #[serde(default = "default_true")]
    pub supports_logprobs: bool,
}

impl ModelProfile {
    pub fn new(model_id: impl Into<String>, tier: u32, capability: f64, input_price: f64) -> Self {
        ModelProfile {
            model_id: model_id.into(),
            tier,
            capability,
            input_price: TokenPrice::per_million(input_price),
            output_price: TokenPrice::default(),
            probe_fraction: default_probe_fraction(),
            endpoint: String::new(),
            grounding_accuracy: 0.0,
            supports_logprobs: true,
        }
    }

    pub fn with_output_price(mut self, dollars_per_million: f64) -> Self {
        self.output_price = TokenPrice::per_million(dollars_per_million);
        self
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    pub fn with_probe_fraction(mut self, fraction: f64) -> Self {
        self.probe_fraction = fraction;
        self
    }

    pub fn with_grounding_accuracy(mut self, percent: f64) -> Self {
        self.grounding_accuracy = percent;
        self
    }

    /// Cost of a generation with the given token counts at this model's prices.
    pub fn charge(&self, input_tokens: u64, output_tokens: u64) -> Money {
        self.input_price.cost(input_tokens) + self.output_price.cost(output_tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierSelector {
    Smallest,
    Largest,
    Tier(u32),
}

/// Pool members ordered by tier, with capability and input price
/// non-decreasing along the order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ModelPool {
    models: Vec<ModelProfile>,
}

impl ModelPool {
    pub fn new(mut models: Vec<ModelProfile>) -> Result<Self, PoolError> {
        if models.is_empty() {
            return Err(PoolError::Empty);
        }
        models.sort_by_key(|m| m.tier);
        for m in &models {
            if !(0.0..=1.0).contains(&m.capability) {
                return Err(PoolError::CapabilityRange {
                    model: m.model_id.clone(),
                    capability: m.capability,
                });
            }
            if !(m.probe_fraction > 0.0 && m.probe_fraction <= 1.0) {
                return Err(PoolError::ProbeFraction {
                    model: m.model_id.clone(),
                    fraction: m.probe_fraction,
                });
            }
        }
        for pair in models.windows(2) {
            let (lo, hi) = (&pair[0], &pair[1]);
            if hi.tier <= lo.tier {
                return Err(PoolError::TierOrder {
                    model: hi.model_id.clone(),
                    tier: hi.tier,
                    previous: lo.tier,
                });
            }
            if hi.capability < lo.capability {
                return Err(PoolError::CapabilityOrder {
                    model: hi.model_id.clone(),
                    capability: hi.capability,
                });
            }
            if hi.input_price < lo.input_price {
                return Err(PoolError::PriceOrder { model: hi.model_id.clone() });
            }
        }
        Ok(ModelPool { models })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[ModelProfile] {
        &self.models
    }

    pub fn smallest(&self) -> &ModelProfile {
        &self.models[0]
    }

    pub fn largest(&self) -> &ModelProfile {
        &self.models[self.models.len() - 1]
    }

    pub fn tier_of(&self, selector: TierSelector) -> Result<&ModelProfile, PoolError> {
        match selector {
            TierSelector::Smallest => Ok(self.smallest()),
            TierSelector::Largest => Ok(self.largest()),
            TierSelector::Tier(t) => self
                .models
                .iter()
                .find(|m| m.tier == t)
                .ok_or(PoolError::NoSuchTier(t)),
        }
    }

    pub fn by_id(&self, model_id: &str) -> Option<&ModelProfile> {
        self.models.iter().find(|m| m.model_id == model_id)
    }
}

impl<'de> Deserialize<'de> for ModelPool {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let models = Vec::<ModelProfile>::deserialize(d)?;
        ModelPool::new(models).map_err(serde::de::Error::custom)
    }
}
