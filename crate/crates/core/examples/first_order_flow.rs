//! First-order discrete vakonomic flow: a free particle in the plane forced
//! to move along a fixed slope, `(y' - y) = c (x' - x)`.
//!
//!     cargo run --example first_order_flow

use std::sync::Arc;

use nalgebra::dvector;
use vakonomic::first_order::{flow1, FirstOrderProblem};
use vakonomic::models::FreeParticle;
use vakonomic::numdiff::VectorFn;
use vakonomic::types::{ConfigPoint, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = 0.5;
    let slope = VectorFn::new(2, 2, 1, move |p| dvector![(p[1][1] - p[0][1]) - c * (p[1][0] - p[0][0])]);
    let problem = FirstOrderProblem::new(Arc::new(FreeParticle::new(2)), Arc::new(slope), 0.1)?;

    let q0 = ConfigPoint::from_slice(&[0.0, 0.0])?;
    let q1 = ConfigPoint::from_slice(&[0.1, 0.05])?;
    let (path, lams) = flow1(&problem, &q0, &q1, &dvector![0.0], 10, &SolverSettings::default())?;

    println!("{:>3} {:>10} {:>10} {:>12}", "k", "x", "y", "lambda");
    for k in 0..path.len() {
        let q = path.point(k);
        let lam = if k < lams.len() { format!("{:12.3e}", lams.get(k)[0]) } else { String::new() };
        println!("{k:>3} {:>10.6} {:>10.6} {lam}", q[0], q[1]);
    }
    Ok(())
}
