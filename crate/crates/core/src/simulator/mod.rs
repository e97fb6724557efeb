//! Offline reproduction of the routing economics: a synthetic world with
//! latent difficulty, scenario runs, fixed-confidence trace replays and
//! memory warming curves.

mod confgen;
mod replay;
mod scenario;
mod warming;
mod world;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use confgen::{generate_confidence, BandParams, ConfidenceParams};
pub use replay::{run_openclaw_replay, ReplayRates};
pub use scenario::{run_scenario, run_scenario_traced, ConfidenceMode, MemoryMode, Scenario, SimReport};
pub use warming::{warming_curve, warmth, WarmingCurve, WarmingPoint, HYPOTHETICAL_LABEL, N_SAT};
pub use world::{
    check_equalization, correctness_probability, oracle_policy, sigmoid, DifficultyDistribution, WorldError,
    WorldParams,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("malformed trace at line {line}: {message}")]
    MalformedTrace { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One line of a per-call trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub turn: u64,
    /// Call category in input traces; routing reason in emitted traces.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
    #[serde(default)]
    pub tokens_in: u64,
    #[serde(default)]
    pub tokens_out: u64,
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, SimError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| SimError::MalformedTrace {
            line: n + 1,
            message: e.to_string(),
        })?;
        if rec.confidence.is_some_and(|c| !(0.0..=1.0).contains(&c)) {
            return Err(SimError::MalformedTrace {
                line: n + 1,
                message: "confidence outside [0, 1]".into(),
            });
        }
        out.push(rec);
    }
    if out.is_empty() {
        return Err(SimError::MalformedTrace {
            line: 0,
            message: "trace has no records".into(),
        });
    }
    Ok(out)
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trip() {
        let recs = vec![TraceRecord {
            turn: 0,
            kind: "simple".into(),
            confidence: Some(0.96),
            difficulty: None,
            tokens_in: 10,
            tokens_out: 2,
        }];
        let mut buf = Vec::new();
        write_trace(&mut buf, &recs).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn malformed_traces() {
        assert!(matches!(
            read_trace("{\"turn\": 1}\n".as_bytes()),
            Err(SimError::MalformedTrace { line: 1, .. })
        ));
        assert!(matches!(
            read_trace("{\"turn\":0,\"kind\":\"x\",\"confidence\":1.5}\n".as_bytes()),
            Err(SimError::MalformedTrace { .. })
        ));
        assert!(matches!(read_trace("".as_bytes()), Err(SimError::MalformedTrace { line: 0, .. })));
    }
}
