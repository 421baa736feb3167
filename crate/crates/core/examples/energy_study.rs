//! Reconstructed energy along 500 steps of the discrete cart-pole flow,
//! written as CSV and as an SVG line plot.
//!
//!     cargo run --release --example energy_study -- [out_dir]

use std::path::PathBuf;

use vakonomic::experiments::{run_energy_study, ExperimentConfig, RawConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| ".".into()));
    let mut raw = RawConfig::parse("h = 0.01\nN = 500\nstate0 = 0, 2.84, 0.1, 0, 0, 0, 0, 0\nearly = 50\n")?;
    raw.set("csv", dir.join("energy.csv").to_str().unwrap());
    raw.set("svg", dir.join("energy.svg").to_str().unwrap());
    let summary = run_energy_study(&ExperimentConfig::from_raw(&raw)?)?;
    println!("{summary}");
    let b = summary.band;
    println!(
        "bounded band: {} (max deviation / early amplitude = {:.2}, trend / amplitude = {:.2})",
        b.max_deviation <= 5.0 * b.early_amplitude && b.trend_excursion <= b.early_amplitude,
        b.max_deviation / b.early_amplitude,
        b.trend_excursion / b.early_amplitude
    );
    Ok(())
}
