//! Monte Carlo evaluation of the routing policy on a synthetic world.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::confgen::ConfidenceParams;
use super::warming::warmth;
use super::world::{correctness_probability, WorldParams};
use super::{SimError, TraceRecord};
use crate::costmodel::{effective_accuracy, savings_with_direct, CallUsage, CostLedger, CostParams, TierShares, TokenUsage};
use crate::difficulty::{combine_difficulty_with, BandCutoffs, ThresholdConfig};
use crate::money::Money;
use crate::outcome::{RouteReason, RoutingOutcome};
use crate::pool::ModelPool;
use crate::routing::{route, RouteDecision, RoutingPolicy, Target};
use crate::safety::{RiskAssessment, DEFAULT_TAU_RISK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    Cold,
    Warm,
    /// Calls cycle through an application's first interactions, from no
    /// memory up to saturation.
    Warming,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    #[default]
    Banded,
    /// Confidence is 1 when the small model would be right and 0 otherwise.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub pool: ModelPool,
    pub world: WorldParams,
    #[serde(default)]
    pub thresholds: ThresholdConfig,
    #[serde(default)]
    pub cutoffs: BandCutoffs,
    #[serde(default)]
    pub confidence: ConfidenceParams,
    #[serde(default)]
    pub confidence_mode: ConfidenceMode,
    #[serde(default = "default_n_calls")]
    pub n_calls: usize,
    pub memory_mode: MemoryMode,
    #[serde(default)]
    pub preroute: bool,
    /// Probability that a call is flagged as risky.
    #[serde(default)]
    pub risky_fraction: f64,
    /// Capability the small model gains on knowledge-dependent calls once
    /// fully warm; scaled by the memory level like the confidence shift.
    #[serde(default)]
    pub memory_capability_gain: f64,
    /// Input tokens per call; every call has the same size.
    #[serde(default = "default_tokens")]
    pub tokens_per_call: u64,
    /// Memory level applied to every call, overriding `memory_mode`.
    #[serde(skip)]
    pub(crate) warmth_override: Option<f64>,
}

fn default_n_calls() -> usize {
    100_000
}

fn default_tokens() -> u64 {
    1_000_000
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_calls == 0 {
            return Err(SimError::Invalid("n_calls must be at least 1".into()));
        }
        if self.pool.len() < 2 {
            return Err(SimError::Invalid("the pool needs at least two models".into()));
        }
        if !(0.0..=1.0).contains(&self.risky_fraction) {
            return Err(SimError::Invalid("risky_fraction must be in [0, 1]".into()));
        }
        if !(self.memory_capability_gain.is_finite() && self.memory_capability_gain >= 0.0) {
            return Err(SimError::Invalid("memory_capability_gain must be non-negative".into()));
        }
        if self.tokens_per_call == 0 {
            return Err(SimError::Invalid("tokens_per_call must be positive".into()));
        }
        self.world.validate().map_err(|e| SimError::Invalid(e.to_string()))
    }

    pub fn policy(&self) -> RoutingPolicy {
        RoutingPolicy {
            thresholds: self.thresholds,
            cutoffs: self.cutoffs,
            preroute_enabled: self.preroute,
        }
    }

    pub fn cost_params(&self) -> CostParams {
        CostParams::from_pool(&self.pool, self.tokens_per_call).expect("validated pool prices")
    }

    fn probe_tokens(&self) -> u64 {
        (self.tokens_per_call as f64 * self.pool.smallest().probe_fraction).round() as u64
    }

    fn warmth_of_call(&self, index: usize) -> f64 {
        if let Some(w) = self.warmth_override {
            return w;
        }
        match self.memory_mode {
            MemoryMode::Cold => 0.0,
            MemoryMode::Warm => 1.0,
            MemoryMode::Warming => warmth(index % (super::warming::N_SAT + 1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub n_calls: usize,
    pub seed: u64,
    /// Fraction of calls answered above the smallest tier.
    pub alpha: f64,
    /// Escalations after a failed probe.
    pub alpha_probed: f64,
    /// Calls sent above the smallest tier without a probe.
    pub alpha_direct: f64,
    /// Absent when correctness is unknown, as in trace replays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_accuracy: Option<f64>,
    pub mean_cost: f64,
    pub savings: f64,
    /// Savings predicted by the analytical model at the measured rates.
    pub analytical_savings: f64,
    pub tier_shares: TierShares,
    pub reasons: BTreeMap<String, u64>,
    pub cost_total: Money,
    pub baseline_total: Money,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl SimReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scenario",
            "n_calls",
            "alpha",
            "effective_accuracy",
            "mean_cost",
            "savings",
            "share_small",
            "share_large",
            "share_guarded",
        ])?;
        w.write_record([
            self.scenario.clone(),
            self.n_calls.to_string(),
            self.alpha.to_string(),
            self.effective_accuracy.map(|a| a.to_string()).unwrap_or_default(),
            self.mean_cost.to_string(),
            self.savings.to_string(),
            self.tier_shares.small.to_string(),
            self.tier_shares.large.to_string(),
            self.tier_shares.guarded.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

struct SimCall {
    difficulty: f64,
    decision: RouteDecision,
    guarded: bool,
    correct: bool,
    large_correct: bool,
}

fn simulate_call(s: &Scenario, policy: &RoutingPolicy, index: usize) -> SimCall {
    let mut rng = ChaCha8Rng::seed_from_u64(s.world.seed);
    rng.set_stream(index as u64);
    let d = s.world.difficulty.sample(&mut rng).clamp(0.0, 1.0);
    let u_risk: f64 = rng.random();
    let u_conf: f64 = rng.random();
    let u_small: f64 = rng.random();
    let u_large: f64 = rng.random();

    let gamma = s.world.gamma;
    let warmth = s.warmth_of_call(index);
    let knowledge_dependent = d >= s.confidence.high_max_d && d <= s.confidence.medium_max_d;
    let theta_small = s.pool.smallest().capability
        + if knowledge_dependent { s.memory_capability_gain * warmth } else { 0.0 };
    let small_correct = u_small < correctness_probability(d, theta_small, gamma);
    let large_correct = u_large < correctness_probability(d, s.pool.largest().capability, gamma);

    let risk = RiskAssessment::new(if u_risk < s.risky_fraction { 1.0 } else { 0.0 }, DEFAULT_TAU_RISK);
    let est = combine_difficulty_with(d, d, &s.cutoffs).expect("difficulty clamped to unit interval");
    let decision = route(policy, &risk, &est, || {
        Some(match s.confidence_mode {
            ConfidenceMode::Banded => s.confidence.value(d, warmth, u_conf),
            ConfidenceMode::Oracle => f64::from(u8::from(small_correct)),
        })
    });
    let correct = match decision.target {
        Target::Smallest => small_correct,
        Target::Largest => large_correct,
    };
    SimCall {
        difficulty: d,
        decision,
        guarded: decision.guardrail_required,
        correct,
        large_correct,
    }
}

fn simulate_all(s: &Scenario, threads: Option<usize>) -> Result<Vec<SimCall>, SimError> {
    let policy = s.policy();
    let run = || (0..s.n_calls).into_par_iter().map(|i| simulate_call(s, &policy, i)).collect();
    match threads {
        None => Ok(run()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SimError::Invalid(e.to_string()))?;
            Ok(pool.install(run))
        }
    }
}

pub fn run_scenario(s: &Scenario) -> Result<SimReport, SimError> {
    run_scenario_traced(s, None).map(|(r, _)| r)
}

/// Runs `s` on `threads` worker threads (the global pool when `None`) and
/// also returns a per-call trace. The result does not depend on `threads`.
pub fn run_scenario_traced(s: &Scenario, threads: Option<usize>) -> Result<(SimReport, Vec<TraceRecord>), SimError> {
    s.validate()?;
    let calls = simulate_all(s, threads)?;
    let small = s.pool.smallest();
    let large = s.pool.largest();
    let full = TokenUsage::new(s.tokens_per_call, 0);
    let probe = TokenUsage::new(s.probe_tokens(), 0);

    let mut ledger = CostLedger::new();
    let mut reasons: BTreeMap<String, u64> = RouteReason::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect();
    let mut trace = Vec::with_capacity(calls.len());
    let (mut correct, mut large_correct, mut probed_escalations) = (0u64, 0u64, 0u64);

    for (i, c) in calls.iter().enumerate() {
        let d = c.decision;
        let usage = match d.reason {
            RouteReason::ConfidentProbe => CallUsage::probe_only(full),
            RouteReason::LowConfidenceEscalation => CallUsage::probed_then(probe, full),
            _ => CallUsage::generation_only(full),
        };
        let model = match d.target {
            Target::Smallest => small,
            Target::Largest => large,
        };
        let outcome = RoutingOutcome {
            call_ref: i.to_string(),
            difficulty: c.difficulty,
            confidence: d.confidence,
            risk: if c.guarded { 1.0 } else { 0.0 },
            threshold_used: d.threshold,
            tier_chosen: model.tier,
            model_id: model.model_id.clone(),
            reason: d.reason,
            probe_charged: d.probe_charged,
            guardrail_verification: c.guarded,
            cost: Money::ZERO,
            response: String::new(),
        };
        ledger.charge(&outcome, &usage, &s.pool).expect("pool members are known");
        *reasons.get_mut(d.reason.as_str()).expect("all reasons present") += 1;
        correct += u64::from(c.correct);
        large_correct += u64::from(c.large_correct);
        probed_escalations += u64::from(d.reason == RouteReason::LowConfidenceEscalation);
        let tokens = usage.probe.map_or(0, |u| u.input) + usage.generation.map_or(0, |u| u.input);
        trace.push(TraceRecord {
            turn: i as u64,
            kind: d.reason.as_str().to_string(),
            confidence: d.confidence,
            difficulty: Some(c.difficulty),
            tokens_in: tokens,
            tokens_out: 0,
        });
    }

    let report = ledger.report().expect("n_calls >= 1");
    let n = s.n_calls as f64;
    let alpha_probed = probed_escalations as f64 / n;
    let alpha_direct = (ledger.escalations - probed_escalations) as f64 / n;
    let effective = match s.world.acc_s_retained {
        Some(acc_s) => effective_accuracy(report.alpha, acc_s, large_correct as f64 / n)
            .map_err(|e| SimError::Invalid(e.to_string()))?,
        None => correct as f64 / n,
    };
    let report = SimReport {
        scenario: s.name.clone(),
        n_calls: s.n_calls,
        seed: s.world.seed,
        alpha: report.alpha,
        alpha_probed,
        alpha_direct,
        effective_accuracy: Some(effective),
        mean_cost: report.mean_cost_per_call,
        savings: report.savings_fraction.expect("baseline is positive"),
        analytical_savings: savings_with_direct(alpha_probed, alpha_direct, &s.cost_params())
            .expect("fractions sum to at most one"),
        tier_shares: report.tier_shares,
        reasons,
        cost_total: report.cost_total,
        baseline_total: report.baseline_total,
        notes: Vec::new(),
    };
    Ok((report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::ModelProfile;
    use crate::simulator::world::DifficultyDistribution;

    fn scenario(dist: DifficultyDistribution, mode: MemoryMode, preroute: bool) -> Scenario {
        Scenario {
            name: "t".into(),
            description: String::new(),
            pool: ModelPool::new(vec![
                ModelProfile::new("small", 1, 0.45, 0.045),
                ModelProfile::new("large", 2, 0.75, 0.30),
            ])
            .unwrap(),
            world: WorldParams {
                gamma: 0.1,
                delta: 0.0,
                difficulty: dist,
                seed: 9,
                acc_s_retained: None,
            },
            thresholds: ThresholdConfig::default(),
            cutoffs: BandCutoffs::default(),
            confidence: ConfidenceParams::default(),
            confidence_mode: ConfidenceMode::Banded,
            n_calls: 4000,
            memory_mode: mode,
            preroute,
            risky_fraction: 0.0,
            memory_capability_gain: 0.3,
            tokens_per_call: 1_000_000,
            warmth_override: None,
        }
    }

    #[test]
    fn trivial_world_stays_small() {
        let s = scenario(DifficultyDistribution::Constant { value: 0.0 }, MemoryMode::Cold, true);
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.alpha, 0.0);
        assert!((r.savings - 0.85).abs() < 1e-12);
        assert_eq!(r.reasons["easy_preroute"], 4000);
    }

    #[test]
    fn all_risky_goes_guarded() {
        let mut s = scenario(DifficultyDistribution::beta_mixture(0.5), MemoryMode::Warm, true);
        s.risky_fraction = 1.0;
        let r = run_scenario(&s).unwrap();
        assert_eq!(r.tier_shares.guarded, 1.0);
        assert_eq!(r.reasons["safety_override"], 4000);
    }

    #[test]
    fn ledger_matches_formula() {
        for (mode, pre) in [(MemoryMode::Cold, false), (MemoryMode::Warm, false), (MemoryMode::Warm, true)] {
            let s = scenario(DifficultyDistribution::beta_mixture(0.6), mode, pre);
            let r = run_scenario(&s).unwrap();
            assert!(((r.savings - r.analytical_savings) / r.analytical_savings).abs() < 1e-9);
            assert!((r.tier_shares.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn thread_count_does_not_change_the_report() {
        let s = scenario(DifficultyDistribution::beta_mixture(0.7), MemoryMode::Warming, true);
        let (a, ta) = run_scenario_traced(&s, Some(1)).unwrap();
        let (b, tb) = run_scenario_traced(&s, Some(3)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(ta, tb);
    }

    #[test]
    fn oracle_confidence_bounds_accuracy() {
        let mut s = scenario(DifficultyDistribution::Uniform { low: 0.0, high: 1.0 }, MemoryMode::Cold, false);
        s.confidence_mode = ConfidenceMode::Oracle;
        let r = run_scenario(&s).unwrap();
        assert!(r.effective_accuracy.unwrap() >= 1.0 - r.alpha);
    }

    #[test]
    fn rejects_empty_runs() {
        let mut s = scenario(DifficultyDistribution::Constant { value: 0.5 }, MemoryMode::Cold, false);
        s.n_calls = 0;
        assert!(matches!(run_scenario(&s), Err(SimError::Invalid(_))));
    }
}
