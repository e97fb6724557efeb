//! Analytical cost formulas and the live per-call cost ledger.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;
use crate::outcome::{RouteReason, RoutingOutcome};
use crate::pool::ModelPool;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("{name} = {value} is outside its valid range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("per-call costs must be positive with c_S <= c_L (c_S = {c_s}, c_L = {c_l}, c_probe = {c_probe})")]
    BadParams { c_s: f64, c_l: f64, c_probe: f64 },
    #[error("model {0:?} is not in the pool")]
    UnknownModel(String),
    #[error("the ledger has no calls")]
    EmptyLedger,
}

fn unit(name: &'static str, value: f64) -> Result<f64, CostError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(CostError::OutOfRange { name, value })
    }
}

/// Per-call costs of the analytical model, in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    c_s: f64,
    c_l: f64,
    c_probe: f64,
}

impl CostParams {
    pub fn new(c_s: f64, c_l: f64, c_probe: f64) -> Result<Self, CostError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(c_s) && positive(c_l) && positive(c_probe) && c_s <= c_l) {
            return Err(CostError::BadParams { c_s, c_l, c_probe });
        }
        Ok(CostParams { c_s, c_l, c_probe })
    }

    /// Costs normalised to `c_L = 1`, with the probe a fraction of `c_S`.
    pub fn from_ratio(small_over_large: f64, probe_fraction: f64) -> Result<Self, CostError> {
        Self::new(small_over_large, 1.0, probe_fraction * small_over_large)
    }

    /// Costs of a call of `tokens` input tokens on the two ends of `pool`.
    pub fn from_pool(pool: &ModelPool, tokens: u64) -> Result<Self, CostError> {
        let small = pool.smallest();
        let c_s = small.charge(tokens, 0).dollars();
        Self::new(c_s, pool.largest().charge(tokens, 0).dollars(), c_s * small.probe_fraction)
    }

    pub fn c_s(&self) -> f64 {
        self.c_s
    }

    pub fn c_l(&self) -> f64 {
        self.c_l
    }

    pub fn c_probe(&self) -> f64 {
        self.c_probe
    }
}

/// Expected cost per call when a fraction `alpha` of probed calls escalates.
pub fn expected_cost(alpha: f64, p: &CostParams) -> Result<f64, CostError> {
    let alpha = unit("alpha", alpha)?;
    Ok((1.0 - alpha) * p.c_s + alpha * (p.c_probe + p.c_l))
}

/// Saving relative to sending every call to the large model.
pub fn savings(alpha: f64, p: &CostParams) -> Result<f64, CostError> {
    Ok(1.0 - expected_cost(alpha, p)? / p.c_l)
}

/// Expected cost when, besides `alpha_probed` escalating after a probe, a
/// fraction `alpha_direct` goes to the large model without one. Every other
/// call costs `c_S`.
pub fn expected_cost_with_direct(alpha_probed: f64, alpha_direct: f64, p: &CostParams) -> Result<f64, CostError> {
    let probed = unit("alpha_probed", alpha_probed)?;
    let direct = unit("alpha_direct", alpha_direct)?;
    let small = unit("1 - alpha", 1.0 - probed - direct)?;
    Ok(small * p.c_s + probed * (p.c_probe + p.c_l) + direct * p.c_l)
}

pub fn savings_with_direct(alpha_probed: f64, alpha_direct: f64, p: &CostParams) -> Result<f64, CostError> {
    Ok(1.0 - expected_cost_with_direct(alpha_probed, alpha_direct, p)? / p.c_l)
}

/// Accuracy of the mixed policy: small-model accuracy on retained calls,
/// large-model accuracy on escalated ones. Accuracies may be fractions or
/// percentages as long as both use the same scale.
pub fn effective_accuracy(alpha: f64, acc_s: f64, acc_l: f64) -> Result<f64, CostError> {
    let alpha = unit("alpha", alpha)?;
    for (name, v) in [("acc_S", acc_s), ("acc_L", acc_l)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(CostError::OutOfRange { name, value: v });
        }
    }
    Ok((1.0 - alpha) * acc_s + alpha * acc_l)
}

/// `1 - cost / baseline`, absent for an empty baseline.
pub fn savings_fraction(cost: Money, baseline: Money) -> Option<f64> {
    cost.ratio(baseline).map(|r| 1.0 - r)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

impl TokenUsage {
    pub const fn new(input: u64, output: u64) -> Self {
        TokenUsage { input, output }
    }
}

/// Tokens a call actually consumed. An accepted probe is the generation, so
/// it appears only as `probe`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallUsage {
    pub probe: Option<TokenUsage>,
    pub generation: Option<TokenUsage>,
}

impl CallUsage {
    pub fn probe_only(probe: TokenUsage) -> Self {
        CallUsage {
            probe: Some(probe),
            generation: None,
        }
    }

    pub fn generation_only(generation: TokenUsage) -> Self {
        CallUsage {
            probe: None,
            generation: Some(generation),
        }
    }

    pub fn probed_then(probe: TokenUsage, generation: TokenUsage) -> Self {
        CallUsage {
            probe: Some(probe),
            generation: Some(generation),
        }
    }

    /// The tokens an all-large deployment would have spent on this call.
    fn baseline_tokens(&self) -> TokenUsage {
        self.generation.or(self.probe).unwrap_or_default()
    }
}

/// Traffic split across the small model, the large model and the large
/// model under guardrail verification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TierShares {
    pub small: f64,
    pub large: f64,
    pub guarded: f64,
}

impl TierShares {
    pub fn sum(&self) -> f64 {
        self.small + self.large + self.guarded
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub calls_total: u64,
    /// Calls answered by anything other than the smallest tier.
    pub escalations: u64,
    pub probe_charges: u64,
    pub cost_accumulated: Money,
    pub baseline_accumulated: Money,
    pub small_calls: u64,
    pub large_calls: u64,
    pub guarded_calls: u64,
    /// Calls sent above the smallest tier after a failed probe.
    pub probed_escalations: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one routed call and returns what it cost.
    pub fn charge(&mut self, outcome: &RoutingOutcome, usage: &CallUsage, pool: &ModelPool) -> Result<Money, CostError> {
        let small = pool.smallest();
        let large = pool.largest();
        let chosen = pool
            .by_id(&outcome.model_id)
            .ok_or_else(|| CostError::UnknownModel(outcome.model_id.clone()))?;

        let mut cost = Money::ZERO;
        if let Some(p) = usage.probe {
            cost += small.charge(p.input, p.output);
        }
        if let Some(g) = usage.generation {
            cost += chosen.charge(g.input, g.output);
        }
        let base = usage.baseline_tokens();

        self.calls_total += 1;
        self.cost_accumulated += cost;
        self.baseline_accumulated += large.charge(base.input, base.output);
        if outcome.probe_charged {
            self.probe_charges += 1;
        }
        if chosen.tier != small.tier {
            self.escalations += 1;
            if outcome.reason == RouteReason::LowConfidenceEscalation {
                self.probed_escalations += 1;
            }
        }
        if outcome.guardrail_verification {
            self.guarded_calls += 1;
        } else if chosen.tier == small.tier {
            self.small_calls += 1;
        } else {
            self.large_calls += 1;
        }
        Ok(cost)
    }

    pub fn report(&self) -> Result<LedgerReport, CostError> {
        if self.calls_total == 0 {
            return Err(CostError::EmptyLedger);
        }
        let n = self.calls_total as f64;
        Ok(LedgerReport {
            calls_total: self.calls_total,
            escalations: self.escalations,
            probe_charges: self.probe_charges,
            alpha: self.escalations as f64 / n,
            mean_cost_per_call: self.cost_accumulated.dollars() / n,
            savings_fraction: savings_fraction(self.cost_accumulated, self.baseline_accumulated),
            cost_total: self.cost_accumulated,
            baseline_total: self.baseline_accumulated,
            tier_shares: self.tier_shares(),
        })
    }

    /// All zero for an empty ledger.
    pub fn tier_shares(&self) -> TierShares {
        if self.calls_total == 0 {
            return TierShares::default();
        }
        let n = self.calls_total as f64;
        TierShares {
            small: self.small_calls as f64 / n,
            large: self.large_calls as f64 / n,
            guarded: self.guarded_calls as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub calls_total: u64,
    pub escalations: u64,
    pub probe_charges: u64,
    pub alpha: f64,
    pub mean_cost_per_call: f64,
    /// Signed; absent when the baseline is zero.
    pub savings_fraction: Option<f64>,
    pub cost_total: Money,
    pub baseline_total: Money,
    pub tier_shares: TierShares,
}

impl LedgerReport {
    pub fn write_csv<W: io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "calls_total",
            "escalations",
            "probe_charges",
            "alpha",
            "mean_cost_per_call",
            "savings_fraction",
            "cost_total",
            "baseline_total",
            "share_small",
            "share_large",
            "share_guarded",
        ])?;
        w.write_record([
            self.calls_total.to_string(),
            self.escalations.to_string(),
            self.probe_charges.to_string(),
            self.alpha.to_string(),
            self.mean_cost_per_call.to_string(),
            self.savings_fraction.map(|s| s.to_string()).unwrap_or_default(),
            self.cost_total.dollars().to_string(),
            self.baseline_total.dollars().to_string(),
            self.tier_shares.small.to_string(),
            self.tier_shares.large.to_string(),
            self.tier_shares.guarded.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::ModelProfile;
    use proptest::prelude::*;

    fn pool() -> ModelPool {
        ModelPool::new(vec![
            ModelProfile::new("small", 1, 0.4, 0.04),
            ModelProfile::new("large", 2, 0.8, 0.27),
        ])
        .unwrap()
    }

    fn outcome(model: &str, tier: u32, reason: RouteReason, probe: bool) -> RoutingOutcome {
        RoutingOutcome {
            call_ref: "c".into(),
            difficulty: 0.5,
            confidence: None,
            risk: 0.0,
            threshold_used: 0.86,
            tier_chosen: tier,
            model_id: model.into(),
            reason,
            probe_charged: probe,
            guardrail_verification: reason == RouteReason::SafetyOverride,
            cost: Money::ZERO,
            response: String::new(),
        }
    }

    #[test]
    fn worked_examples() {
        let p = CostParams::new(1.0, 10.0, 0.1).unwrap();
        assert_eq!(expected_cost(0.0, &p).unwrap(), 1.0);
        assert!((expected_cost(1.0, &p).unwrap() - 10.1).abs() < 1e-12);
        assert!((expected_cost(0.2, &p).unwrap() - 2.82).abs() < 1e-12);

        let q = CostParams::from_ratio(0.1, 0.1).unwrap();
        let s = savings(0.2, &q).unwrap();
        // (1 - 0.2)(1 - 0.1) - 0.2 * 0.01
        assert!((s - (0.8 * 0.9 - 0.2 * 0.01)).abs() < 1e-12);
        assert!((s - 0.70).abs() <= 0.02);
        assert!((savings(1.0, &q).unwrap() + 0.01).abs() < 1e-12);
        assert!((savings(0.0, &CostParams::from_ratio(0.15, 0.1).unwrap()).unwrap() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn effective_accuracy_example() {
        let acc = effective_accuracy(0.35, 29.0, 43.6).unwrap();
        assert!((acc - (0.65 * 29.0 + 0.35 * 43.6)).abs() < 1e-12);
        assert!((acc - 34.11).abs() < 1e-9);
    }

    #[test]
    fn range_errors() {
        let p = CostParams::from_ratio(0.1, 0.1).unwrap();
        assert!(matches!(expected_cost(1.5, &p), Err(CostError::OutOfRange { .. })));
        assert!(matches!(effective_accuracy(-0.1, 0.5, 0.6), Err(CostError::OutOfRange { .. })));
        assert!(CostParams::new(2.0, 1.0, 0.1).is_err());
        assert!(CostParams::new(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn accepted_call_charges_small_prices() {
        let mut l = CostLedger::new();
        let c = l
            .charge(
                &outcome("small", 1, RouteReason::ConfidentProbe, true),
                &CallUsage::probe_only(TokenUsage::new(1000, 0)),
                &pool(),
            )
            .unwrap();
        assert_eq!(c, Money::from_dollars(0.00004));
        assert_eq!(l.baseline_accumulated, Money::from_dollars(0.00027));
    }

    #[test]
    fn escalation_charges_probe_and_large() {
        let mut l = CostLedger::new();
        let usage = CallUsage::probed_then(TokenUsage::new(100, 0), TokenUsage::new(1000, 0));
        let c = l
            .charge(&outcome("large", 2, RouteReason::LowConfidenceEscalation, true), &usage, &pool())
            .unwrap();
        assert_eq!(c, Money::from_dollars(0.000004 + 0.00027));
        assert_eq!((l.escalations, l.probed_escalations, l.probe_charges), (1, 1, 1));
    }

    #[test]
    fn unknown_model_is_rejected() {
        let mut l = CostLedger::new();
        let r = l.charge(
            &outcome("ghost", 1, RouteReason::EasyPreroute, false),
            &CallUsage::default(),
            &pool(),
        );
        assert_eq!(r, Err(CostError::UnknownModel("ghost".into())));
        assert_eq!(l.calls_total, 0);
        assert_eq!(l.report(), Err(CostError::EmptyLedger));
    }

    #[test]
    fn retained_session_matches_price_ratio() {
        let mut l = CostLedger::new();
        for _ in 0..20 {
            l.charge(
                &outcome("small", 1, RouteReason::ConfidentProbe, true),
                &CallUsage::probe_only(TokenUsage::new(10_333, 0)),
                &pool(),
            )
            .unwrap();
        }
        let r = l.report().unwrap();
        assert_eq!(r.alpha, 0.0);
        let s = r.savings_fraction.unwrap();
        assert!((s - (1.0 - 0.04 / 0.27)).abs() < 1e-12);
        assert!((s - 0.86).abs() <= 0.01);
        assert_eq!(r.tier_shares.small, 1.0);
    }

    #[test]
    fn savings_of_reported_totals() {
        let s = savings_fraction(Money::from_dollars(0.0173), Money::from_dollars(0.0558)).unwrap();
        assert!((s - 0.690).abs() < 5e-4);
        let s = savings_fraction(Money::from_dollars(0.0080), Money::from_dollars(0.0558)).unwrap();
        assert!((s - 0.857).abs() < 5e-4);
        assert_eq!(savings_fraction(Money::ZERO, Money::ZERO), None);
    }

    #[test]
    fn csv_has_header_and_row() {
        let mut l = CostLedger::new();
        l.charge(
            &outcome("large", 2, RouteReason::SafetyOverride, false),
            &CallUsage::generation_only(TokenUsage::new(10, 5)),
            &pool(),
        )
        .unwrap();
        let mut buf = Vec::new();
        l.report().unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().ends_with(",0,0,1"));
    }

    proptest! {
        #[test]
        fn savings_is_affine_decreasing(r in 0.01f64..1.0, f in 0.01f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let p = CostParams::from_ratio(r, f).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(savings(lo, &p).unwrap() >= savings(hi, &p).unwrap() - 1e-12);
            let mid = savings((lo + hi) / 2.0, &p).unwrap();
            let avg = (savings(lo, &p).unwrap() + savings(hi, &p).unwrap()) / 2.0;
            prop_assert!((mid - avg).abs() < 1e-12);
            prop_assert_eq!(savings(0.0, &p).unwrap(), 1.0 - p.c_s() / p.c_l());
        }

        #[test]
        fn effective_accuracy_is_bounded(a in 0.0f64..=1.0, s in 0.0f64..1.0, l in 0.0f64..1.0) {
            let e = effective_accuracy(a, s, l).unwrap();
            prop_assert!(e >= s.min(l) - 1e-12 && e <= s.max(l) + 1e-12);
            let up = effective_accuracy(a, s + 0.01, l).unwrap();
            prop_assert!(up >= e);
        }

        #[test]
        fn direct_formula_reduces_to_plain(a in 0.0f64..=1.0, r in 0.01f64..1.0) {
            let p = CostParams::from_ratio(r, 0.1).unwrap();
            let plain = expected_cost(a, &p).unwrap();
            let ext = expected_cost_with_direct(a, 0.0, &p).unwrap();
            prop_assert!((plain - ext).abs() < 1e-12);
        }
    }
}
