//! The unconstrained second-difference problem: every cubic sequence is an
//! exact discrete extremal. Runs the flow, single shooting and the direct
//! solver on the same cubic and prints the largest deviation of each.
//!
//!     cargo run --example second_difference_cubic

use std::sync::Arc;

use nalgebra::dvector;
use vakonomic::models::{cubic_sequence, SecondDifference};
use vakonomic::numdiff::NoConstraints;
use vakonomic::oracle::solve_direct;
use vakonomic::reduce::{shoot_bvp, ShootingGuess};
use vakonomic::second_order::{flow2, SecondOrderProblem};
use vakonomic::types::{ConfigPoint, Coords, DiscretePath, SolverSettings};

fn max_dev(path: &DiscretePath, exact: &[ConfigPoint]) -> f64 {
    path.points().iter().zip(exact).map(|(a, b)| (a.coords() - b.coords()).amax()).fold(0.0, f64::max)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = SecondOrderProblem::new(
        Arc::new(SecondDifference { dim: 2 }),
        Arc::new(NoConstraints { arity: 3, dim: 2 }),
        0.1,
    )?;
    let s = SolverSettings::default();
    let n = 16;
    let coeffs = [dvector![0.2, -0.1], dvector![0.3, 0.4], dvector![-0.05, 0.02], dvector![0.004, -0.003]];
    let cubic: Vec<ConfigPoint> = cubic_sequence([&coeffs[0], &coeffs[1], &coeffs[2], &coeffs[3]], n + 1)
        .into_iter()
        .map(ConfigPoint::new)
        .collect::<Result<_, _>>()?;
    let none = Coords::zeros(0);

    let (flowed, _) = flow2(&problem, [&cubic[0], &cubic[1], &cubic[2], &cubic[3]], [&none, &none], n, &s)?;
    println!("flow2       max deviation {:.2e}", max_dev(&flowed, &cubic));

    let boundary = [&cubic[0], &cubic[1], &cubic[n - 1], &cubic[n]];
    let guess = ShootingGuess { q2: cubic[1].clone(), q3: cubic[1].clone(), lam0: none.clone(), lam1: none.clone() };
    let (shot, _) = shoot_bvp(&problem, boundary, &guess, n, &s)?;
    println!("shoot_bvp   max deviation {:.2e}", max_dev(&shot, &cubic));

    let (direct, _, stats) = solve_direct(&problem, boundary, n, None, &s)?;
    println!("solve_direct max deviation {:.2e} ({} Newton iterations)", max_dev(&direct, &cubic), stats.iterations);
    Ok(())
}
