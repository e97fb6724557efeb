//! Projected escalation and savings over an application's first
//! interactions, written as CSV to stdout.

use std::path::Path;

use avr_core::simulator::{warming_curve, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/vl_cold.toml");
    let mut scenario = Scenario::load(&path)?;
    scenario.n_calls = 20_000;
    let curve = warming_curve(&scenario, 10)?;
    eprintln!("{}", curve.label);
    curve.write_csv(std::io::stdout().lock())?;
    Ok(())
}
