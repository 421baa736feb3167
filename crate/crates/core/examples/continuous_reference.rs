//! RK4 on the reduced continuous dynamics and the drift of `H` on `W1`
//! as the step is halved.
//!
//!     cargo run --release --example continuous_reference

use vakonomic::cartpole::continuous::{hamiltonian_w1, rk4_integrate, ReducedState};
use vakonomic::cartpole::CartPoleParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = CartPoleParams::default();
    let s0 = ReducedState::from_physical(&p, 0.0, 0.3, 0.2, 0.5, 0.1, 0.05, -0.1, 0.02);
    let t_end = 2.0;
    let mut prev: Option<f64> = None;
    for dt in [2e-3, 1e-3, 5e-4] {
        let steps = (t_end / dt) as usize;
        let traj = rk4_integrate(&p, s0, dt, steps)?;
        let h0 = hamiltonian_w1(&p, &traj[0]);
        let drift = traj.iter().map(|s| (hamiltonian_w1(&p, s) - h0).abs()).fold(0.0, f64::max);
        let ratio = prev.map(|d| format!("{:.1}", d / drift)).unwrap_or_else(|| "-".into());
        println!("dt {dt:.0e}: max |H - H0| = {drift:.3e}  (ratio {ratio})");
        prev = Some(drift);
    }
    Ok(())
}
