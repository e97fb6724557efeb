//! Synthetic probe confidences.
//!
//! Difficulty selects a band by cutoff. Each band is a uniform interval
//! around a centre; memory moves the centre up by a band-specific shift
//! and may narrow the interval. Intermediate memory levels interpolate, so
//! with a shared uniform draw the value is monotone in the memory level.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandParams {
    pub center: f64,
    pub half_width: f64,
    #[serde(default)]
    pub memory_shift: f64,
    /// Half-width once fully warm; defaults to `half_width`.
    #[serde(default)]
    pub warm_half_width: Option<f64>,
}

impl BandParams {
    pub const fn new(center: f64, half_width: f64) -> Self {
        BandParams {
            center,
            half_width,
            memory_shift: 0.0,
            warm_half_width: None,
        }
    }

    /// Value for memory level `warmth` in [0, 1] and uniform draw `u` in [0, 1).
    pub fn value(&self, warmth: f64, u: f64) -> f64 {
        let w = warmth.clamp(0.0, 1.0);
        let warm_hw = self.warm_half_width.unwrap_or(self.half_width);
        let hw = self.half_width + (warm_hw - self.half_width) * w;
        (self.center + self.memory_shift * w + hw * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Calls below this difficulty draw from the high band.
    pub high_max_d: f64,
    /// Calls up to this difficulty draw from the knowledge-dependent band;
    /// harder calls draw from the visual-reasoning band.
    pub medium_max_d: f64,
    pub high: BandParams,
    pub medium: BandParams,
    pub visual: BandParams,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        ConfidenceParams {
            high_max_d: 0.4,
            medium_max_d: 0.7,
            high: BandParams::new(0.95, 0.02),
            medium: BandParams {
                center: 0.83,
                half_width: 0.01,
                memory_shift: 0.125,
                warm_half_width: Some(0.005),
            },
            visual: BandParams::new(0.75, 0.05),
        }
    }
}

impl ConfidenceParams {
    pub fn band_for(&self, d: f64) -> &BandParams {
        if d < self.high_max_d {
            &self.high
        } else if d <= self.medium_max_d {
            &self.medium
        } else {
            &self.visual
        }
    }

    pub fn value(&self, d: f64, warmth: f64, u: f64) -> f64 {
        self.band_for(d).value(warmth, u)
    }

}

/// Draws a confidence for a call of difficulty `d` at memory level
/// `warmth` (0 cold, 1 warm).
pub fn generate_confidence<R: Rng + ?Sized>(d: f64, warmth: f64, params: &ConfidenceParams, rng: &mut R) -> f64 {
    params.value(d, warmth, rng.random())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn knowledge_dependent_ranges() {
        let p = ConfidenceParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let cold = generate_confidence(0.5, 0.0, &p, &mut rng);
            assert!((0.82..=0.84).contains(&cold), "{cold}");
            let warm = generate_confidence(0.5, 1.0, &p, &mut rng);
            assert!((0.95..=0.96).contains(&warm), "{warm}");
        }
    }

    #[test]
    fn high_band_ignores_memory() {
        let p = ConfidenceParams::default();
        for u in [0.0, 0.3, 0.99] {
            let v = p.value(0.1, 0.0, u);
            assert!((0.93 - 1e-12..=0.97 + 1e-12).contains(&v));
            assert_eq!(v, p.value(0.1, 1.0, u));
        }
    }

    #[test]
    fn overshoot_is_clamped() {
        let b = BandParams {
            center: 0.95,
            half_width: 0.01,
            memory_shift: 0.2,
            warm_half_width: None,
        };
        assert_eq!(b.value(1.0, 0.9), 1.0);
    }

    proptest! {
        #[test]
        fn monotone_in_warmth(d in 0.0f64..=1.0, u in 0.0f64..1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let p = ConfidenceParams::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(p.value(d, lo, u) <= p.value(d, hi, u) + 1e-15);
        }
    }
}
