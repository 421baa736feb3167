//! Direct transcription of a short cart-pole maneuver, the flow seeded from
//! its start, and a random check that feasible neighbours cost more.
//!
//!     cargo run --release --example cartpole_oracle

use vakonomic::cartpole::discrete::discrete_system;
use vakonomic::cartpole::CartPoleParams;
use vakonomic::oracle::{minimality_check, solve_direct};
use vakonomic::reduce::total_cost;
use vakonomic::second_order::flow2;
use vakonomic::types::{ConfigPoint, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = CartPoleParams::default();
    let (h, n) = (0.05, 20);
    let (sys, problem) = discrete_system(&params, h)?;
    let s = SolverSettings::default();

    // Pole at rest 0.1 rad from upright, brought to rest at 0.05 rad.
    let a = ConfigPoint::from_slice(&[0.0, 0.1])?;
    let b = ConfigPoint::from_slice(&[0.0, 0.05])?;
    let (path, lams, stats) = solve_direct(&problem, [&a, &a, &b, &b], n, None, &s)?;
    println!(
        "oracle: {} iterations, residual {:.2e}, cost {:.6}",
        stats.iterations,
        stats.residual,
        total_cost(&sys, &path)?
    );

    let (flowed, _) = flow2(
        &problem,
        [path.point(0), path.point(1), path.point(2), path.point(3)],
        [lams.get(0), lams.get(1)],
        n,
        &s,
    )?;
    let gap = (0..=n)
        .map(|k| (flowed.point(k).coords() - path.point(k).coords()).amax())
        .fold(0.0, f64::max);
    println!("flow from the oracle's first window reproduces it to {gap:.2e}");

    let report = minimality_check(&sys, &problem, &path, 50, 1e-3, 7, &s)?;
    println!(
        "50 feasible perturbations: smallest cost increase {:.3e}, projection residual {:.1e}",
        report.min_increase(),
        report.max_projection_residual
    );
    Ok(())
}
