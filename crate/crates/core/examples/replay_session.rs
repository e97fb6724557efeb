//! Replays the bundled agent sessions against their price table.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use avr_core::simulator::{read_trace, run_openclaw_replay, ReplayRates};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("traces");
    let sessions = [
        ("openclaw_warm.jsonl", "openclaw_rates.toml"),
        ("openclaw_cold.jsonl", "openclaw_rates.toml"),
        ("openclaw_cold_per_query.jsonl", "openclaw_rates_cold_reference.toml"),
    ];
    println!("{:<32} {:>6} {:>7} {:>12} {:>12}", "session", "turns", "alpha", "cost ($)", "savings");
    for (trace, rates) in sessions {
        let records = read_trace(BufReader::new(File::open(dir.join(trace))?))?;
        let rates = ReplayRates::load(&dir.join(rates))?;
        let r = run_openclaw_replay(trace, &records, &rates)?;
        println!(
            "{:<32} {:>6} {:>7.3} {:>12.6} {:>11.1}%",
            trace,
            r.n_calls,
            r.alpha,
            r.cost_total.dollars(),
            r.savings * 100.0
        );
        for note in &r.notes {
            println!("    note: {note}");
        }
    }
    Ok(())
}
