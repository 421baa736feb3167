//! Continuous cart-pole: Lagrangian, the constraint solved for `thetaddot`,
//! the restricted cost `L~_M = F^2 / 2`, and the reduced dynamics on `W1`.
//!
//! The restricted cost and constraint depend on neither `x` nor `xdot`, so
//! the fourth-order equation for `x` collapses to `pi'' = 0` with
//! `pi = dL~_M/dxddot - p1_theta dG/dxddot = F D + p1_theta cos(theta) / l`.
//! [`ReducedState`] therefore carries `pi` and `pi_dot` and recovers `F`
//! and `xddot` from them.

use crate::cartpole::CartPoleParams;
use crate::error::{Result, VakonError};

pub fn lagrangian(p: &CartPoleParams, _x: f64, theta: f64, xdot: f64, thetadot: f64) -> f64 {
    0.5 * p.big_m * xdot * xdot
        + 0.5 * p.m * (xdot * xdot + 2.0 * xdot * p.l * thetadot * theta.cos() + p.l * p.l * thetadot * thetadot)
        - p.m * p.g * p.l * theta.cos()
        - p.m * p.g * p.hbar
}

/// `thetaddot` on the constraint manifold, `(g sin theta - xddot cos theta) / l`.
pub fn constraint_g(p: &CartPoleParams, theta: f64, xddot: f64) -> f64 {
    (p.g * theta.sin() - xddot * theta.cos()) / p.l
}

/// `(dG/dtheta, dG/dxddot)`; `G` does not depend on `thetadot`.
pub fn constraint_g_partials(p: &CartPoleParams, theta: f64, xddot: f64) -> (f64, f64) {
    (
        (p.g * theta.cos() + xddot * theta.sin()) / p.l,
        -theta.cos() / p.l,
    )
}

/// Cart force `(M + m) xddot - m l thetadot^2 sin theta + m l thetaddot cos theta`.
pub fn force_u(p: &CartPoleParams, theta: f64, thetadot: f64, xddot: f64, thetaddot: f64) -> f64 {
    p.total_mass() * xddot - p.m * p.l * thetadot * thetadot * theta.sin()
        + p.m * p.l * thetaddot * theta.cos()
}

/// The force with the constraint substituted:
/// `F = D xddot - m l thetadot^2 sin theta + m g cos theta sin theta`.
pub fn bracket_f(p: &CartPoleParams, theta: f64, thetadot: f64, xddot: f64) -> f64 {
    p.total_mass() * xddot - p.m * p.l * thetadot * thetadot * theta.sin()
        + p.m * p.g * theta.cos() * theta.sin()
        - p.m * xddot * theta.cos() * theta.cos()
}

/// Partials of [`bracket_f`] in `(theta, thetadot, xddot)`.
pub fn bracket_f_partials(p: &CartPoleParams, theta: f64, thetadot: f64, xddot: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    [
        2.0 * p.m * s * c * xddot - p.m * p.l * thetadot * thetadot * c + p.m * p.g * (c * c - s * s),
        -2.0 * p.m * p.l * thetadot * s,
        p.d(theta),
    ]
}

/// Restricted cost `L~_M = F^2 / 2`.
pub fn ltilde_m(p: &CartPoleParams, theta: f64, thetadot: f64, xddot: f64) -> f64 {
    let f = bracket_f(p, theta, thetadot, xddot);
    0.5 * f * f
}

/// Partials of [`ltilde_m`] in `(theta, thetadot, xddot)`.
pub fn ltilde_m_partials(p: &CartPoleParams, theta: f64, thetadot: f64, xddot: f64) -> [f64; 3] {
    let f = bracket_f(p, theta, thetadot, xddot);
    bracket_f_partials(p, theta, thetadot, xddot).map(|d| f * d)
}

/// Regularity scalar `d2L~_M/dxddot^2 - p1_theta d2G/dxddot^2 = ((M + m) - m cos^2 theta)^2`.
pub fn regularity_r(p: &CartPoleParams, theta: f64) -> f64 {
    let d = p.d(theta);
    d * d
}

/// A point of `W1` in the coordinates used by the reduced dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReducedState {
    pub x: f64,
    pub theta: f64,
    pub xdot: f64,
    pub thetadot: f64,
    pub p1theta: f64,
    pub p1theta_dot: f64,
    pub pi: f64,
    pub pi_dot: f64,
}

impl ReducedState {
    /// Builds the state from `xddot` instead of `pi`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_physical(
        p: &CartPoleParams,
        x: f64,
        theta: f64,
        xdot: f64,
        thetadot: f64,
        xddot: f64,
        p1theta: f64,
        p1theta_dot: f64,
        pi_dot: f64,
    ) -> Self {
        let f = bracket_f(p, theta, thetadot, xddot);
        Self {
            x,
            theta,
            xdot,
            thetadot,
            p1theta,
            p1theta_dot,
            pi: f * p.d(theta) + p1theta * theta.cos() / p.l,
            pi_dot,
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.x,
            self.theta,
            self.xdot,
            self.thetadot,
            self.p1theta,
            self.p1theta_dot,
            self.pi,
            self.pi_dot,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            x: a[0],
            theta: a[1],
            xdot: a[2],
            thetadot: a[3],
            p1theta: a[4],
            p1theta_dot: a[5],
            pi: a[6],
            pi_dot: a[7],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// The force `F` recovered from `pi`.
    pub fn force(&self, p: &CartPoleParams) -> f64 {
        (self.pi - self.p1theta * self.theta.cos() / p.l) / p.d(self.theta)
    }

    /// `xddot` recovered from `pi`.
    pub fn xddot(&self, p: &CartPoleParams) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let f = self.force(p);
        (f + p.m * p.l * self.thetadot * self.thetadot * s - p.m * p.g * c * s) / p.d(self.theta)
    }
}

/// Time derivative of the reduced state.
pub fn reduced_rhs(p: &CartPoleParams, st: &ReducedState) -> ReducedState {
    let (s, c) = st.theta.sin_cos();
    let d = p.d(st.theta);
    let f = st.force(p);
    let xddot = st.xddot(p);
    let thetaddot = constraint_g(p, st.theta, xddot);
    let [df_dtheta, df_dthetadot, _] = bracket_f_partials(p, st.theta, st.thetadot, xddot);
    let (dg_dtheta, _) = constraint_g_partials(p, st.theta, xddot);
    let f_dot = (st.pi_dot - st.p1theta_dot * c / p.l + st.p1theta * s * st.thetadot / p.l
        - f * 2.0 * p.m * s * c * st.thetadot)
        / d;
    // d/dt (F dF/dthetadot) - (F dF/dtheta - p1 dG/dtheta), with dF/dthetadot = -2 m l thetadot sin theta.
    let d_dt_ltm_thetadot =
        f_dot * df_dthetadot - 2.0 * p.m * p.l * f * (thetaddot * s + st.thetadot * st.thetadot * c);
    let p1_ddot = d_dt_ltm_thetadot - (f * df_dtheta - st.p1theta * dg_dtheta);
    ReducedState {
        x: st.xdot,
        theta: st.thetadot,
        xdot: xddot,
        thetadot: thetaddot,
        p1theta: st.p1theta_dot,
        p1theta_dot: p1_ddot,
        pi: st.pi_dot,
        pi_dot: 0.0,
    }
}

/// `H|W1 = p0_x xdot + p0_theta thetadot + p1_x xddot + p1_theta G - L~_M`
/// with `p1_x = pi`, `p0_x = -pi_dot` and
/// `p0_theta = dL~_M/dthetadot - p1theta_dot`.
pub fn hamiltonian_w1(p: &CartPoleParams, st: &ReducedState) -> f64 {
    let xddot = st.xddot(p);
    let [_, dl_dthetadot, _] = ltilde_m_partials(p, st.theta, st.thetadot, xddot);
    let p0x = -st.pi_dot;
    let p0theta = dl_dthetadot - st.p1theta_dot;
    p0x * st.xdot + p0theta * st.thetadot + st.pi * xddot
        + st.p1theta * constraint_g(p, st.theta, xddot)
        - ltilde_m(p, st.theta, st.thetadot, xddot)
}

fn axpy(a: &[f64; 8], t: f64, b: &[f64; 8]) -> [f64; 8] {
    std::array::from_fn(|i| a[i] + t * b[i])
}

/// Classical fixed-step fourth-order Runge-Kutta; returns `steps + 1` states.
pub fn rk4_integrate(
    p: &CartPoleParams,
    s0: ReducedState,
    dt: f64,
    steps: usize,
) -> Result<Vec<ReducedState>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(VakonError::Precondition(format!("dt must be positive, got {dt}")));
    }
    let f = |y: &[f64; 8]| reduced_rhs(p, &ReducedState::from_array(*y)).to_array();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(s0);
    let mut y = s0.to_array();
    for step in 1..=steps {
        let k1 = f(&y);
        let k2 = f(&axpy(&y, 0.5 * dt, &k1));
        let k3 = f(&axpy(&y, 0.5 * dt, &k2));
        let k4 = f(&axpy(&y, dt, &k3));
        y = std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        let st = ReducedState::from_array(y);
        if !st.is_finite() {
            return Err(VakonError::BlowUp { step });
        }
        out.push(st);
    }
    Ok(out)
}
