//! Flow seeds taken from a continuous extremal.
//!
//! Positions come from the RK4 reference at `t = 0, h, 2h, 3h`, with `q_2`
//! and `q_3` moved onto the discrete constraints. The multipliers use the
//! inverse of the momentum map of the energy diagnostics,
//! `lambda^{k-1} = (p1_theta(t_k) - m l cos(theta_k) F(t_k)) / s` with
//! `s = -m l^2`.
//!
//! Solving a short boundary-value problem for the seed instead is worse: the
//! global Jacobian is nearly singular along multiplier sequences affine in
//! `k` (the position block scales like `h^-4`), so such solves return the
//! right positions with multipliers off by large affine terms.

use crate::cartpole::continuous::{rk4_integrate, ReducedState};
use crate::cartpole::diagnostics::theoretical_scale;
use crate::cartpole::CartPoleParams;
use crate::error::Result;
use crate::second_order::{project_seed, SecondOrderProblem};
use crate::types::{ConfigPoint, Coords, SolverSettings};

/// Sub-steps of the reference per discrete step.
pub const REFERENCE_SUBSTEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub q: [ConfigPoint; 4],
    pub lam: [Coords; 2],
}

impl Seed {
    pub fn points(&self) -> [&ConfigPoint; 4] {
        [&self.q[0], &self.q[1], &self.q[2], &self.q[3]]
    }

    pub fn multipliers(&self) -> [&Coords; 2] {
        [&self.lam[0], &self.lam[1]]
    }
}

/// RK4 states at `t_k = k h`, `k = 0 ..= nodes`, with `dt = h / 100`.
pub fn reference_states(p: &CartPoleParams, state: ReducedState, h: f64, nodes: usize) -> Result<Vec<ReducedState>> {
    let dt = h / REFERENCE_SUBSTEPS as f64;
    let states = rk4_integrate(p, state, dt, nodes * REFERENCE_SUBSTEPS)?;
    Ok(states.into_iter().step_by(REFERENCE_SUBSTEPS).collect())
}

pub fn reference_positions(p: &CartPoleParams, state: ReducedState, h: f64, nodes: usize) -> Result<Vec<ConfigPoint>> {
    reference_states(p, state, h, nodes)?
        .iter()
        .map(|s| ConfigPoint::from_slice(&[s.x, s.theta]))
        .collect()
}

/// Discrete multiplier matching a continuous state.
pub fn multiplier_from_state(p: &CartPoleParams, st: &ReducedState) -> f64 {
    (st.p1theta - p.m * p.l * st.theta.cos() * st.force(p)) / theoretical_scale(p)
}

pub fn matched_seed(
    p: &CartPoleParams,
    problem: &SecondOrderProblem,
    state: ReducedState,
    settings: &SolverSettings,
) -> Result<Seed> {
    let states = reference_states(p, state, problem.time_step, 3)?;
    let q: Vec<ConfigPoint> = states
        .iter()
        .map(|s| ConfigPoint::from_slice(&[s.x, s.theta]))
        .collect::<Result<_>>()?;
    let q = project_seed(problem, [&q[0], &q[1], &q[2], &q[3]], settings)?;
    let lam = [1, 2].map(|k| Coords::from_element(1, multiplier_from_state(p, &states[k])));
    Ok(Seed { q, lam })
}
