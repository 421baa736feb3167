//! Flow error against the RK4 solution of the continuous problem for a
//! sequence of step sizes, computed in parallel.
//!
//!     cargo run --release --example convergence

use vakonomic::experiments::{run_convergence, ExperimentConfig, RawConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = RawConfig::parse("T = 2\nh_list = 0.04, 0.02, 0.01, 0.005\nstate0 = 0, 2.84, 0.1, 0, 0, 0, 0, 0\n")?;
    println!("{:>8} {:>6} {:>12} {:>7}", "h", "N", "max error", "order");
    for row in run_convergence(&ExperimentConfig::from_raw(&raw)?)? {
        let order = row.order.map(|o| format!("{o:7.3}")).unwrap_or_else(|| "      -".into());
        println!("{:>8} {:>6} {:>12.4e} {order}", row.h, row.n_last, row.max_error);
    }
    Ok(())
}
