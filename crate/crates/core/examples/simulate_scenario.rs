//! Runs the bundled scenarios, or the scenario files given as arguments,
//! and prints one summary row each.

use std::path::PathBuf;

use avr_core::simulator::{run_scenario, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios");
        paths = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
    }
    println!("{:<26} {:>7} {:>8} {:>8} {:>7} {:>7} {:>7}", "scenario", "alpha", "savings", "acc", "small", "large", "guard");
    for path in paths {
        let s = Scenario::load(&path)?;
        let r = run_scenario(&s)?;
        println!(
            "{:<26} {:>7.4} {:>8.4} {:>8.4} {:>7.4} {:>7.4} {:>7.4}",
            r.scenario,
            r.alpha,
            r.savings,
            r.effective_accuracy.unwrap_or(f64::NAN),
            r.tier_shares.small,
            r.tier_shares.large,
            r.tier_shares.guarded
        );
    }
    Ok(())
}
