//! Hypothetical memory warming curve: how escalation and savings evolve
//! over an application's first interactions.

use serde::{Deserialize, Serialize};

use super::scenario::{run_scenario, Scenario};
use super::SimError;

/// Interactions after which memory stops adding confidence.
pub const N_SAT: usize = 10;

pub const HYPOTHETICAL_LABEL: &str = "HYPOTHETICAL: projected warming curve, not a measurement";

/// Fraction of the full memory shift reached after `n` interactions;
/// logarithmic growth, saturating at [`N_SAT`].
pub fn warmth(n: usize) -> f64 {
    let n = n.min(N_SAT) as f64;
    (1.0 + n).ln() / (1.0 + N_SAT as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmingPoint {
    pub interaction: usize,
    pub warmth: f64,
    pub escalation_rate: f64,
    pub savings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmingCurve {
    pub label: String,
    pub scenario: String,
    pub points: Vec<WarmingPoint>,
}

impl WarmingCurve {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interaction", "warmth", "escalation_rate", "savings"])?;
        for p in &self.points {
            w.write_record([
                p.interaction.to_string(),
                p.warmth.to_string(),
                p.escalation_rate.to_string(),
                p.savings.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates `s` after 0, 1, ..., `interactions_per_app` prior
/// interactions. Every point reuses the scenario's seed, so the curve
/// compares identical call populations.
pub fn warming_curve(s: &Scenario, interactions_per_app: usize) -> Result<WarmingCurve, SimError> {
    if interactions_per_app == 0 {
        return Err(SimError::Invalid("interactions_per_app must be at least 1".into()));
    }
    let points = (0..=interactions_per_app)
        .map(|n| {
            let w = warmth(n);
            let mut at = s.clone();
            at.warmth_override = Some(w);
            let r = run_scenario(&at)?;
            Ok(WarmingPoint {
                interaction: n,
                warmth: w,
                escalation_rate: r.alpha,
                savings: r.savings,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(WarmingCurve {
        label: HYPOTHETICAL_LABEL.to_string(),
        scenario: s.name.clone(),
        points,
    })
}
