use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use avr_core::simulator::{read_trace, run_openclaw_replay, run_scenario_traced, warming_curve, write_trace, ReplayRates, Scenario};
use clap::{Parser, Subcommand};

/// Offline router simulation and trace replay.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs a scenario and prints its report as JSON.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        calls: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        /// Also writes the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also writes the per-call trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Replays a recorded agent session against a price table.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        rates: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Projects escalation and savings over an app's first interactions.
    Warming {
        scenario: PathBuf,
        /// Interactions per application.
        #[arg(long, default_value_t = 10)]
        apps: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    let mut stdout = io::stdout().lock();
    match Args::parse().cmd {
        Cmd::Run {
            scenario,
            seed,
            calls,
            threads,
            csv,
            trace,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.world.seed = seed;
            }
            if let Some(n) = calls {
                s.n_calls = n;
            }
            let (report, records) = run_scenario_traced(&s, threads)?;
            write!(stdout, "{}", report.to_json())?;
            if let Some(path) = csv {
                report.write_csv(create(&path)?)?;
            }
            if let Some(path) = trace {
                write_trace(create(&path)?, &records)?;
            }
        }
        Cmd::Replay { trace, rates, csv } => {
            let file = File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let records = read_trace(BufReader::new(file))?;
            let rates = ReplayRates::load(&rates)?;
            let name = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let report = run_openclaw_replay(&name, &records, &rates)?;
            write!(stdout, "{}", report.to_json())?;
            if let Some(path) = csv {
                report.write_csv(create(&path)?)?;
            }
        }
        Cmd::Warming { scenario, apps, csv } => {
            let s = Scenario::load(&scenario)?;
            let curve = warming_curve(&s, apps)?;
            match csv {
                Some(path) => curve.write_csv(create(&path)?)?,
                None => {
                    writeln!(stdout, "# {}", curve.label)?;
                    curve.write_csv(&mut stdout)?;
                }
            }
        }
    }
    Ok(())
}
