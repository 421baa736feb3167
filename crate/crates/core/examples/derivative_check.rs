//! The cart-pole derivative gates and identities, then the same suite with
//! one analytic partial deliberately corrupted.
//!
//!     cargo run --release --example derivative_check

use vakonomic::experiments::{run_check, ExperimentConfig, RawConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clean = run_check(&ExperimentConfig::from_raw(&RawConfig::default())?)?;
    println!("{clean}\n");
    let mut raw = RawConfig::default();
    raw.set("corrupt", "Ltilde_d.D2");
    let broken = run_check(&ExperimentConfig::from_raw(&raw)?)?;
    for line in broken.lines.iter().filter(|l| !l.passed) {
        println!("corrupted run: FAIL {} ({})", line.name, line.detail);
    }
    Ok(())
}
