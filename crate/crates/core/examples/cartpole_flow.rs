//! Discrete flow of the cart-pole optimal-control problem from a seed matched
//! to a hanging swing, with per-node residuals written to CSV.
//!
//!     cargo run --release --example cartpole_flow -- [out.csv]

use vakonomic::experiments::{run_flow, ExperimentConfig, RawConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let csv = std::env::args().nth(1).unwrap_or_else(|| "cartpole_flow.csv".into());
    let mut raw = RawConfig::parse(
        "# pendulum 0.3 rad from hanging, cart drifting at 0.1 m/s
         h = 0.01
         N = 200
         state0 = 0, 2.84, 0.1, 0, 0, 0, 0, 0",
    )?;
    raw.set("csv", &csv);
    let cfg = ExperimentConfig::from_raw(&raw)?;
    let summary = run_flow(&cfg)?;
    println!("{summary}");
    println!("wrote {csv}");
    Ok(())
}
