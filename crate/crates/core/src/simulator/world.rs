//! The latent-difficulty world model.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pool::ModelPool;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("delta must be non-negative, got {0}")]
    BadDelta(f64),
    #[error("invalid difficulty distribution: {0}")]
    BadDistribution(String),
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Probability that a model of capability `theta` handles a call of
/// difficulty `d`.
pub fn correctness_probability(d: f64, theta: f64, gamma: f64) -> f64 {
    sigmoid((theta - d) / gamma)
}

/// The cheapest tier whose capability covers `d + delta`, as an index
/// into the pool order. `None` when no member qualifies.
pub fn oracle_policy(d: f64, pool: &ModelPool, delta: f64) -> Option<usize> {
    pool.models().iter().position(|m| m.capability >= d + delta)
}

/// Whether memory closes the gap to the large model within `epsilon`.
pub fn check_equalization(acc_s_with_mem: f64, acc_l: f64, epsilon: f64) -> bool {
    acc_s_with_mem >= acc_l - epsilon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DifficultyDistribution {
    /// `easy_weight` of the mass from Beta(easy_a, easy_b), the rest from
    /// Beta(hard_a, hard_b).
    BetaMixture {
        easy_weight: f64,
        #[serde(default = "two")]
        easy_a: f64,
        #[serde(default = "five")]
        easy_b: f64,
        #[serde(default = "five")]
        hard_a: f64,
        #[serde(default = "two")]
        hard_b: f64,
    },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

fn two() -> f64 {
    2.0
}

fn five() -> f64 {
    5.0
}

impl DifficultyDistribution {
    pub fn beta_mixture(easy_weight: f64) -> Self {
        DifficultyDistribution::BetaMixture {
            easy_weight,
            easy_a: 2.0,
            easy_b: 5.0,
            hard_a: 5.0,
            hard_b: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::BadDistribution(m.to_string()));
        match *self {
            DifficultyDistribution::BetaMixture {
                easy_weight,
                easy_a,
                easy_b,
                hard_a,
                hard_b,
            } => {
                if !(0.0..=1.0).contains(&easy_weight) {
                    return bad("easy_weight must be in [0, 1]");
                }
                if [easy_a, easy_b, hard_a, hard_b].iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return bad("beta shape parameters must be positive");
                }
                Ok(())
            }
            DifficultyDistribution::Uniform { low, high } => {
                if !(0.0 <= low && low <= high && high <= 1.0) {
                    return bad("uniform bounds must satisfy 0 <= low <= high <= 1");
                }
                Ok(())
            }
            DifficultyDistribution::Constant { value } => {
                if !(0.0..=1.0).contains(&value) {
                    return bad("constant difficulty must be in [0, 1]");
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DifficultyDistribution::BetaMixture {
                easy_weight,
                easy_a,
                easy_b,
                hard_a,
                hard_b,
            } => {
                let (a, b) = if rng.random::<f64>() < easy_weight {
                    (easy_a, easy_b)
                } else {
                    (hard_a, hard_b)
                };
                Beta::new(a, b).expect("validated shape").sample(rng)
            }
            DifficultyDistribution::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            DifficultyDistribution::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub delta: f64,
    pub difficulty: DifficultyDistribution,
    #[serde(default)]
    pub seed: u64,
    /// Small-model accuracy on retained calls. When set, effective accuracy
    /// is computed from it instead of from sampled correctness.
    #[serde(default)]
    pub acc_s_retained: Option<f64>,
}

fn default_gamma() -> f64 {
    0.1
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(WorldError::BadGamma(self.gamma));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(WorldError::BadDelta(self.delta));
        }
        self.difficulty.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::ModelProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pool(thetas: &[f64]) -> ModelPool {
        let models = thetas
            .iter()
            .enumerate()
            .map(|(i, &t)| ModelProfile::new(format!("m{i}"), i as u32 + 1, t, 0.01 * (i + 1) as f64))
            .collect();
        ModelPool::new(models).unwrap()
    }

    #[test]
    fn sigmoid_reference_points() {
        assert_eq!(correctness_probability(0.4, 0.4, 0.1), 0.5);
        let e = std::f64::consts::E;
        assert!((correctness_probability(0.3, 0.4, 0.1) - e / (1.0 + e)).abs() < 1e-12);
        assert!((correctness_probability(0.3, 0.4, 0.1) - 0.7311).abs() < 1e-4);
        assert!(correctness_probability(0.3, 0.4, 1e-6) > 1.0 - 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let p = pool(&[0.3, 0.7]);
        assert_eq!(oracle_policy(0.2, &p, 0.05), Some(0));
        assert_eq!(oracle_policy(0.5, &p, 0.3), None);
        assert_eq!(oracle_policy(0.0, &p, 0.0), Some(0));
        assert_eq!(oracle_policy(0.5, &p, 0.0), Some(1));
    }

    #[test]
    fn equalization_boundary() {
        assert!(check_equalization(0.95, 0.95, 0.0));
        assert!(!check_equalization(0.90, 0.95, 0.04));
        assert!(check_equalization(0.90, 0.95, 0.05 + 1e-15));
    }

    #[test]
    fn mixture_samples_stay_in_unit_interval() {
        let dist = DifficultyDistribution::beta_mixture(0.6);
        dist.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        // mixture mean: 0.6 * 2/7 + 0.4 * 5/7
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - (0.6 * 2.0 / 7.0 + 0.4 * 5.0 / 7.0)).abs() < 0.01);
    }

    #[test]
    fn invalid_worlds_are_rejected() {
        let w = WorldParams {
            gamma: 0.0,
            delta: 0.0,
            difficulty: DifficultyDistribution::Constant { value: 0.5 },
            seed: 0,
            acc_s_retained: None,
        };
        assert_eq!(w.validate(), Err(WorldError::BadGamma(0.0)));
        assert!(DifficultyDistribution::Uniform { low: 0.5, high: 0.2 }.validate().is_err());
    }
}
