//! Discrete cart-pole: midpoint-angle discrete Lagrangian with closed-form
//! derivatives, and the printed discrete equations kept verbatim as
//! independent references.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Matrix3x4};

use crate::cartpole::CartPoleParams;
use crate::error::{Result, VakonError};
use crate::numdiff::{check_shape, SlottedScalarFn};
use crate::reduce::{reduce, ControlledDiscreteSystem, QuadraticControlCost};
use crate::second_order::SecondOrderProblem;
use crate::types::{Coords, DofSplit, SolverSettings};

/// `L_d(q_a, q_b)` with velocities `(q_b - q_a) / h` and angle `(theta_a + theta_b) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleLd {
    pub params: CartPoleParams,
    pub h: f64,
}

struct Reduced {
    dx: f64,
    dtheta: f64,
    c: f64,
}

impl CartPoleLd {
    pub fn new(params: CartPoleParams, h: f64) -> Result<Self> {
        params.validate()?;
        if !(h.is_finite() && h > 0.0) {
            return Err(VakonError::InvalidParams(format!("h must be positive, got {h}")));
        }
        Ok(Self { params, h })
    }

    fn vars(&self, a: &Coords, b: &Coords) -> Reduced {
        Reduced {
            dx: (b[0] - a[0]) / self.h,
            dtheta: (b[1] - a[1]) / self.h,
            c: 0.5 * (a[1] + b[1]),
        }
    }

    /// Chain matrix from `(x_a, theta_a, x_b, theta_b)` to `(dx, dtheta, c)`.
    fn chain(&self) -> Matrix3x4<f64> {
        let k = 1.0 / self.h;
        Matrix3x4::new(
            -k, 0.0, k, 0.0, //
            0.0, -k, 0.0, k, //
            0.0, 0.5, 0.0, 0.5,
        )
    }

    fn grad_reduced(&self, r: &Reduced) -> [f64; 3] {
        let p = &self.params;
        let (s, c) = r.c.sin_cos();
        let ml = p.m * p.l;
        [
            p.total_mass() * r.dx + ml * r.dtheta * c,
            ml * r.dx * c + ml * p.l * r.dtheta,
            -ml * r.dx * r.dtheta * s + ml * p.g * s,
        ]
    }

    fn hess_reduced(&self, r: &Reduced) -> Matrix3<f64> {
        let p = &self.params;
        let (s, c) = r.c.sin_cos();
        let ml = p.m * p.l;
        Matrix3::new(
            p.total_mass(), ml * c, -ml * r.dtheta * s, //
            ml * c, ml * p.l, -ml * r.dx * s, //
            -ml * r.dtheta * s, -ml * r.dx * s, -ml * r.dx * r.dtheta * c + ml * p.g * c,
        )
    }
}

impl SlottedScalarFn for CartPoleLd {
    fn arity(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, pts: &[&Coords]) -> f64 {
        discrete_lagrangian(&self.params, self.h, pts[0], pts[1])
    }
    fn partial(&self, slot: usize, pts: &[&Coords], _s: &SolverSettings) -> Result<Coords> {
        check_shape(2, 2, pts)?;
        let r = self.vars(pts[0], pts[1]);
        let g = self.chain().transpose() * nalgebra::Vector3::from(self.grad_reduced(&r));
        Ok(Coords::from_column_slice(&g.as_slice()[2 * slot..2 * slot + 2]))
    }
    fn mixed(&self, i: usize, j: usize, pts: &[&Coords], _s: &SolverSettings) -> Result<DMatrix<f64>> {
        check_shape(2, 2, pts)?;
        let r = self.vars(pts[0], pts[1]);
        let t = self.chain();
        let full = t.transpose() * self.hess_reduced(&r) * t;
        Ok(DMatrix::from_fn(2, 2, |a, b| full[(2 * i + a, 2 * j + b)]))
    }
}

/// The discrete Lagrangian exactly as displayed, term by term.
pub fn discrete_lagrangian(p: &CartPoleParams, h: f64, q_prev: &Coords, q: &Coords) -> f64 {
    let vx = (q[0] - q_prev[0]) / h;
    let vt = (q[1] - q_prev[1]) / h;
    let c = (0.5 * (q[1] + q_prev[1])).cos();
    0.5 * p.big_m * vx * vx + 0.5 * p.m * (vx * vx + 2.0 * vx * p.l * c * vt + p.l * p.l * vt * vt)
        - p.m * p.g * p.l * c
        - p.m * p.g * p.hbar
}

struct Triple {
    dx0: f64,
    dx1: f64,
    dt0: f64,
    dt1: f64,
    c0: f64,
    c1: f64,
    second: f64,
    second_theta: f64,
}

fn triple(qk: &Coords, qk1: &Coords, qk2: &Coords) -> Triple {
    Triple {
        dx0: qk1[0] - qk[0],
        dx1: qk2[0] - qk1[0],
        dt0: qk1[1] - qk[1],
        dt1: qk2[1] - qk1[1],
        c0: 0.5 * (qk1[1] + qk[1]),
        c1: 0.5 * (qk2[1] + qk1[1]),
        second: 2.0 * qk1[0] - qk[0] - qk2[0],
        second_theta: 2.0 * qk1[1] - qk[1] - qk2[1],
    }
}

/// Left side of the printed controlled `x` equation at `(q_k, q_{k+1}, q_{k+2})`.
pub fn printed_x_equation(p: &CartPoleParams, h: f64, qk: &Coords, qk1: &Coords, qk2: &Coords) -> f64 {
    let t = triple(qk, qk1, qk2);
    let h2 = h * h;
    t.second * p.total_mass() / h2 + p.m * p.l / h2 * (t.c0.cos() * t.dt0 - t.c1.cos() * t.dt1)
}

/// Left side of the printed unactuated `theta` equation.
pub fn printed_theta_equation(p: &CartPoleParams, h: f64, qk: &Coords, qk1: &Coords, qk2: &Coords) -> f64 {
    let t = triple(qk, qk1, qk2);
    let (l, m, g) = (p.l, p.m, p.g);
    let h2 = h * h;
    l * l * m / h2 * t.second_theta
        + l * m / h2 * (t.dx0 * t.c0.cos() - t.dx1 * t.c1.cos())
        + l * m * g / 2.0 * (t.c0.sin() + t.c1.sin())
        - l * m / (2.0 * h2) * (t.dx0 * t.dt0 * t.c0.sin() + t.dx1 * t.dt1 * t.c1.sin())
}

/// The printed constraint `Phi_d(q_k, q_{k+1}, q_{k+2})`, with its `h^2` on the gravity term.
pub fn printed_phi(p: &CartPoleParams, h: f64, qk: &Coords, qk1: &Coords, qk2: &Coords) -> f64 {
    let t = triple(qk, qk1, qk2);
    let (l, m, g) = (p.l, p.m, p.g);
    l * l * m * t.second_theta
        + l * m * (t.dx0 * t.c0.cos() - t.dx1 * t.c1.cos())
        + l * m * g * h * h / 2.0 * (t.c0.sin() + t.c1.sin())
        - l * m / 2.0 * (t.dx0 * t.dt0 * t.c0.sin() + t.dx1 * t.dt1 * t.c1.sin())
}

/// The printed expansion of `L~_d` as a sum of two squares. It drops the
/// cross term of `u^2 / 2`; kept only to document that difference.
pub fn printed_ltilde_expansion(p: &CartPoleParams, h: f64, qk: &Coords, qk1: &Coords, qk2: &Coords) -> f64 {
    let t = triple(qk, qk1, qk2);
    let h4 = h.powi(4);
    let ml = p.m * p.l;
    p.total_mass().powi(2) / (2.0 * h4) * t.second * t.second
        + ml * ml / (2.0 * h4) * (t.c0.cos() * t.dt0 - t.c1.cos() * t.dt1).powi(2)
}

/// The controlled system (`x` actuated, `theta` free, `C = u^2 / 2`) and its
/// second-order reduction.
pub fn discrete_system(p: &CartPoleParams, h: f64) -> Result<(ControlledDiscreteSystem, SecondOrderProblem)> {
    let ld = CartPoleLd::new(*p, h)?;
    let sys = ControlledDiscreteSystem::new(
        Arc::new(ld),
        DofSplit::new(2, vec![0], vec![1]),
        Arc::new(QuadraticControlCost::default()),
        h,
    )?;
    let problem = reduce(&sys)?;
    Ok((sys, problem))
}
