//! Savings curve of the probe-then-escalate policy for a few price ratios.

use avr_core::costmodel::{savings, CostParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ratios = [0.05, 0.10, 0.15, 0.25];
    print!("{:>6}", "alpha");
    for r in ratios {
        print!("  cS/cL={r:<5}");
    }
    println!();
    for step in 0..=10 {
        let alpha = step as f64 / 10.0;
        print!("{alpha:>6.1}");
        for r in ratios {
            let p = CostParams::from_ratio(r, 0.1)?;
            print!("  {:>11.1}%", savings(alpha, &p)? * 100.0);
        }
        println!();
    }
    let p = CostParams::from_ratio(0.1, 0.1)?;
    let breakeven = (0..=1000)
        .map(|i| i as f64 / 1000.0)
        .find(|&a| savings(a, &p).unwrap() <= 0.0);
    match breakeven {
        Some(a) => println!("\nat cS/cL = 0.1 routing stops paying off near alpha = {a:.3}"),
        None => println!("\nat cS/cL = 0.1 routing saves money at every escalation rate"),
    }
    Ok(())
}
