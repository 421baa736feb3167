//! The one-step Newton matrix of the cart-pole flow and the continuous
//! regularity scalar `((M + m) - m cos^2 theta)^2` across angles.
//!
//!     cargo run --example step_regularity

use nalgebra::dvector;
use vakonomic::cartpole::continuous::regularity_r;
use vakonomic::cartpole::discrete::discrete_system;
use vakonomic::cartpole::CartPoleParams;
use vakonomic::second_order::kkt2;
use vakonomic::types::SolverSettings;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = CartPoleParams::default();
    let h = 0.01;
    let (_, problem) = discrete_system(&p, h)?;
    println!("{:>7} {:>10} {:>14} {:>12}", "theta", "R", "relative det", "pivot ratio");
    for i in 0..=8 {
        let th = i as f64 * std::f64::consts::PI / 8.0;
        let (x, y, z) = (dvector![0.0, th], dvector![0.001, th + 0.002], dvector![0.002, th + 0.004]);
        let k = kkt2(&problem, &x, &y, &z, &dvector![0.1], &SolverSettings::default())?;
        println!(
            "{th:7.4} {:10.6} {:14.4e} {:12.4e}",
            regularity_r(&p, th),
            k.relative_det,
            k.regularity.pivot_ratio
        );
    }
    println!("minimum of R is M^2 = {}", p.big_m * p.big_m);
    Ok(())
}
