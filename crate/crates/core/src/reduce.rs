//! Discrete underactuated optimal control as a second-order vakonomic problem.
//!
//! A controlled discrete system is a Lagrangian `L_d` on `Q x Q` whose forced
//! Euler-Lagrange equations carry controls only on the actuated indices `a`:
//!
//! ```text
//! D2^a L_d(q_{k-1}, q_k) + D1^a L_d(q_k, q_{k+1}) = u_k^a
//! D2^alpha L_d(q_{k-1}, q_k) + D1^alpha L_d(q_k, q_{k+1}) = 0
//! ```
//!
//! Eliminating `u` turns the running cost `C(q_k, q_{k+1}, u_k)` into a
//! Lagrangian on `Q x Q x Q` and the unactuated equations into constraints.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, VakonError};
use crate::linalg::{damped_newton, fd_jacobian_of, inf_norm};
use crate::numdiff::{check_shape, SlottedScalarFn, SlottedVectorFn};
use crate::second_order::{flow2_unchecked, project_seed, FlowWindow, SecondOrderProblem};
use crate::types::{
    validate_split, ConfigPoint, Coords, DiscretePath, DofSplit, MultiplierSeq, SolverSettings,
};

/// Running cost `C(q, q_next, u)` with `u` over the actuated indices.
pub trait RunningCost: Send + Sync {
    fn eval(&self, q: &Coords, q_next: &Coords, u: &Coords) -> f64;

    /// `(dC/dq, dC/dq_next, dC/du)`.
    fn gradient(&self, q: &Coords, q_next: &Coords, u: &Coords) -> (Coords, Coords, Coords) {
        let arg = [q.clone(), q_next.clone(), u.clone()];
        let g = |slot: usize| {
            fd_gradient(&arg[slot], |v| {
                let mut a = arg.clone();
                a[slot] = v.clone();
                self.eval(&a[0], &a[1], &a[2])
            })
        };
        (g(0), g(1), g(2))
    }

    /// `d2C/du du`.
    fn hess_uu(&self, q: &Coords, q_next: &Coords, u: &Coords) -> DMatrix<f64> {
        fd_matrix(u, u.len(), |v| self.gradient(q, q_next, v).2)
    }

    /// `d2C/du dq_next`, indexed `[u-component, q_next-component]`.
    fn hess_u_next(&self, q: &Coords, q_next: &Coords, u: &Coords) -> DMatrix<f64> {
        fd_matrix(q_next, u.len(), |v| self.gradient(q, v, u).2)
    }
}

fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * (1.0 + x.abs())
}

fn fd_gradient(x: &Coords, f: impl Fn(&Coords) -> f64) -> Coords {
    let mut g = Coords::zeros(x.len());
    let mut w = x.clone();
    for i in 0..x.len() {
        let d = fd_step(x[i]);
        w[i] = x[i] + d;
        let fp = f(&w);
        let xp = w[i];
        w[i] = x[i] - d;
        let fm = f(&w);
        g[i] = (fp - fm) / (xp - w[i]);
        w[i] = x[i];
    }
    g
}

/// Central-difference Jacobian of `f` at `x`, `rows x x.len()`.
fn fd_matrix(x: &Coords, rows: usize, f: impl Fn(&Coords) -> Coords) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, x.len());
    let mut w = x.clone();
    for j in 0..x.len() {
        let d = fd_step(x[j]);
        w[j] = x[j] + d;
        let fp = f(&w);
        let xp = w[j];
        w[j] = x[j] - d;
        let fm = f(&w);
        out.set_column(j, &((fp - fm) / (xp - w[j])));
        w[j] = x[j];
    }
    out
}

/// `C = (weight / 2) |u|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticControlCost {
    pub weight: f64,
}

impl Default for QuadraticControlCost {
    fn default() -> Self {
        Self { weight: 1.0 }
    }
}

impl RunningCost for QuadraticControlCost {
    fn eval(&self, _q: &Coords, _q_next: &Coords, u: &Coords) -> f64 {
        0.5 * self.weight * u.norm_squared()
    }
    fn gradient(&self, q: &Coords, q_next: &Coords, u: &Coords) -> (Coords, Coords, Coords) {
        (Coords::zeros(q.len()), Coords::zeros(q_next.len()), u * self.weight)
    }
    fn hess_uu(&self, _q: &Coords, _q_next: &Coords, u: &Coords) -> DMatrix<f64> {
        DMatrix::identity(u.len(), u.len()) * self.weight
    }
    fn hess_u_next(&self, _q: &Coords, q_next: &Coords, u: &Coords) -> DMatrix<f64> {
        DMatrix::zeros(u.len(), q_next.len())
    }
}

/// A running cost given by a closure; derivatives by finite differences.
pub struct CostFn<F>(pub F);

impl<F> RunningCost for CostFn<F>
where
    F: Fn(&Coords, &Coords, &Coords) -> f64 + Send + Sync,
{
    fn eval(&self, q: &Coords, q_next: &Coords, u: &Coords) -> f64 {
        (self.0)(q, q_next, u)
    }
}

/// Discrete Lagrangian, actuation split and running cost.
#[derive(Clone)]
pub struct ControlledDiscreteSystem {
    pub lagrangian: Arc<dyn SlottedScalarFn>,
    pub split: DofSplit,
    pub cost: Arc<dyn RunningCost>,
    pub time_step: f64,
}

impl ControlledDiscreteSystem {
    pub fn new(
        lagrangian: Arc<dyn SlottedScalarFn>,
        split: DofSplit,
        cost: Arc<dyn RunningCost>,
        time_step: f64,
    ) -> Result<Self> {
        let report = validate_split(&split);
        if !report.is_valid() {
            return Err(VakonError::Contract(format!(
                "invalid actuation split: {}",
                report.violations.join("; ")
            )));
        }
        if lagrangian.arity() != 2 || lagrangian.dim() != split.n {
            return Err(VakonError::Contract(
                "the discrete Lagrangian must act on Q x Q with n matching the split".into(),
            ));
        }
        if !(time_step.is_finite() && time_step > 0.0) {
            return Err(VakonError::Contract(format!("time step must be positive, got {time_step}")));
        }
        Ok(Self {
            lagrangian,
            split,
            cost,
            time_step,
        })
    }

    /// Full forced Euler-Lagrange left side `D2 L_d(x, y) + D1 L_d(y, z)`.
    pub fn el_residual(&self, x: &Coords, y: &Coords, z: &Coords, s: &SolverSettings) -> Result<Coords> {
        Ok(self.lagrangian.partial(1, &[x, y], s)? + self.lagrangian.partial(0, &[y, z], s)?)
    }

    /// `u(x, y, z)`: actuated rows of [`Self::el_residual`].
    pub fn control(&self, x: &Coords, y: &Coords, z: &Coords, s: &SolverSettings) -> Result<Coords> {
        Ok(pick_rows(&self.el_residual(x, y, z, s)?, &self.split.actuated))
    }

    /// Jacobians of the full `D2 L_d(x, y) + D1 L_d(y, z)` with respect to `x`, `y`, `z`.
    fn el_jacobians(
        &self,
        x: &Coords,
        y: &Coords,
        z: &Coords,
        s: &SolverSettings,
    ) -> Result<[DMatrix<f64>; 3]> {
        let l = &self.lagrangian;
        let jx = l.mixed(1, 0, &[x, y], s)?;
        let jy = l.mixed(1, 1, &[x, y], s)? + l.mixed(0, 0, &[y, z], s)?;
        let jz = l.mixed(0, 1, &[y, z], s)?;
        Ok([jx, jy, jz])
    }
}

fn pick_rows(v: &Coords, idx: &[usize]) -> Coords {
    Coords::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn pick_matrix_rows(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), a.ncols(), |r, c| a[(idx[r], c)])
}

/// `L~_d(x, y, z) = C(y, z, u(x, y, z))`.
pub struct ReducedLagrangian {
    sys: ControlledDiscreteSystem,
}

impl ReducedLagrangian {
    fn gradients(&self, pts: &[&Coords], s: &SolverSettings) -> Result<[Coords; 3]> {
        check_shape(3, self.sys.split.n, pts)?;
        let (x, y, z) = (pts[0], pts[1], pts[2]);
        let u = self.sys.control(x, y, z, s)?;
        let (cy, cz, cu) = self.sys.cost.gradient(y, z, &u);
        let j = self.sys.el_jacobians(x, y, z, s)?;
        let ja = j.map(|m| pick_matrix_rows(&m, &self.sys.split.actuated));
        Ok([
            ja[0].transpose() * &cu,
            cy + ja[1].transpose() * &cu,
            cz + ja[2].transpose() * &cu,
        ])
    }
}

impl SlottedScalarFn for ReducedLagrangian {
    fn arity(&self) -> usize {
        3
    }
    fn dim(&self) -> usize {
        self.sys.split.n
    }
    fn eval(&self, pts: &[&Coords]) -> f64 {
        match self.sys.control(pts[0], pts[1], pts[2], &SolverSettings::default()) {
            Ok(u) => self.sys.cost.eval(pts[1], pts[2], &u),
            Err(_) => f64::NAN,
        }
    }
    fn partial(&self, slot: usize, pts: &[&Coords], s: &SolverSettings) -> Result<Coords> {
        let mut g = self.gradients(pts, s)?;
        g.get_mut(slot)
            .map(std::mem::take)
            .ok_or_else(|| VakonError::Contract(format!("slot {slot} out of range for arity 3")))
    }
    fn mixed(&self, i: usize, j: usize, pts: &[&Coords], s: &SolverSettings) -> Result<DMatrix<f64>> {
        check_shape(3, self.sys.split.n, pts)?;
        if (i, j) == (0, 2) || (i, j) == (2, 0) {
            // u depends on x only through D2 L_d(x, y), so the x-Jacobian of u
            // carries no z dependence and D13 L~ = Jx^T (C_uz + C_uu Jz).
            let (x, y, z) = (pts[0], pts[1], pts[2]);
            let u = self.sys.control(x, y, z, s)?;
            let j = self.sys.el_jacobians(x, y, z, s)?;
            let a = &self.sys.split.actuated;
            let (jx, jz) = (pick_matrix_rows(&j[0], a), pick_matrix_rows(&j[2], a));
            let inner = self.sys.cost.hess_u_next(y, z, &u) + self.sys.cost.hess_uu(y, z, &u) * jz;
            let d13 = jx.transpose() * inner;
            return Ok(if i == 0 { d13 } else { d13.transpose() });
        }
        let pts_owned: Vec<Coords> = pts.iter().map(|p| (*p).clone()).collect();
        slot_fd(&pts_owned, j, self.dim(), |w| {
            let refs: Vec<&Coords> = w.iter().collect();
            self.partial(i, &refs, s)
        })
    }
}

/// Central-difference Jacobian of a slot-valued map with respect to slot `j`.
fn slot_fd(
    pts: &[Coords],
    j: usize,
    rows: usize,
    f: impl Fn(&[Coords]) -> Result<Coords>,
) -> Result<DMatrix<f64>> {
    let mut w = pts.to_vec();
    let base = pts[j].clone();
    fd_jacobian_of(&base, rows, f64::EPSILON.cbrt(), |v| {
        w[j] = v.clone();
        f(&w)
    })
}

/// `Phi_d^alpha(x, y, z) = D2^alpha L_d(x, y) + D1^alpha L_d(y, z)`.
pub struct ReducedConstraint {
    sys: ControlledDiscreteSystem,
}

impl SlottedVectorFn for ReducedConstraint {
    fn arity(&self) -> usize {
        3
    }
    fn dim(&self) -> usize {
        self.sys.split.n
    }
    fn outputs(&self) -> usize {
        self.sys.split.unactuated.len()
    }
    fn eval(&self, pts: &[&Coords]) -> Coords {
        match self.sys.el_residual(pts[0], pts[1], pts[2], &SolverSettings::default()) {
            Ok(r) => pick_rows(&r, &self.sys.split.unactuated),
            Err(_) => Coords::from_element(self.outputs(), f64::NAN),
        }
    }
    fn jacobian(&self, slot: usize, pts: &[&Coords], s: &SolverSettings) -> Result<DMatrix<f64>> {
        check_shape(3, self.sys.split.n, pts)?;
        let j = self.sys.el_jacobians(pts[0], pts[1], pts[2], s)?;
        let m = j
            .get(slot)
            .ok_or_else(|| VakonError::Contract(format!("slot {slot} out of range for arity 3")))?;
        Ok(pick_matrix_rows(m, &self.sys.split.unactuated))
    }
    fn weighted_mixed(
        &self,
        i: usize,
        j: usize,
        weights: &Coords,
        pts: &[&Coords],
        s: &SolverSettings,
    ) -> Result<DMatrix<f64>> {
        check_shape(3, self.sys.split.n, pts)?;
        let n = self.dim();
        if (i, j) == (0, 2) || (i, j) == (2, 0) {
            return Ok(DMatrix::zeros(n, n));
        }
        let pts_owned: Vec<Coords> = pts.iter().map(|p| (*p).clone()).collect();
        slot_fd(&pts_owned, j, n, |w| {
            let refs: Vec<&Coords> = w.iter().collect();
            Ok(self.jacobian(i, &refs, s)?.transpose() * weights)
        })
    }
}

/// The second-order problem `(L~_d, Phi_d)` of a controlled system.
pub fn reduce(sys: &ControlledDiscreteSystem) -> Result<SecondOrderProblem> {
    SecondOrderProblem::new(
        Arc::new(ReducedLagrangian { sys: sys.clone() }),
        Arc::new(ReducedConstraint { sys: sys.clone() }),
        sys.time_step,
    )
}

/// Controls `u_1, ..., u_{N-1}`; entry `i` belongs to node `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSeq {
    pub u: Vec<Coords>,
}

impl ControlSeq {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Control at node `k`, `1 <= k <= N - 1`.
    pub fn at_node(&self, k: usize) -> Option<&Coords> {
        k.checked_sub(1).and_then(|i| self.u.get(i))
    }
}

fn need_three(path: &DiscretePath) -> Result<()> {
    if path.len() < 3 {
        return Err(VakonError::Range {
            k: 0,
            width: 3,
            len: path.len(),
        });
    }
    Ok(())
}

pub fn recover_controls(sys: &ControlledDiscreteSystem, path: &DiscretePath) -> Result<ControlSeq> {
    need_three(path)?;
    let s = SolverSettings::default();
    let u = (1..path.len() - 1)
        .map(|k| sys.control(path.point(k - 1), path.point(k), path.point(k + 1), &s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ControlSeq { u })
}

/// `sum_{k=1}^{N-1} C(q_k, q_{k+1}, u_k)`.
pub fn total_cost(sys: &ControlledDiscreteSystem, path: &DiscretePath) -> Result<f64> {
    let controls = recover_controls(sys, path)?;
    Ok(controls
        .u
        .iter()
        .enumerate()
        .map(|(i, u)| sys.cost.eval(path.point(i + 1), path.point(i + 2), u))
        .sum())
}

/// Unknowns of the shooting map: `(q2, q3, lambda^0, lambda^1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingGuess {
    pub q2: ConfigPoint,
    pub q3: ConfigPoint,
    pub lam0: Coords,
    pub lam1: Coords,
}

/// Looser than the flow's own seed test: shooting projects the guess itself.
const SHOOT_SEED_TOL: f64 = 1e-3;

/// Single shooting for `q_0, q_1, q_{N-1}, q_N` fixed.
///
/// Damped Newton on `(q2, q3, lambda^0, lambda^1)` with central-difference
/// sensitivities, to `100 * newton_tol`. Conditioning degrades with `N`;
/// [`crate::oracle::solve_direct`] is the better tool for long horizons.
pub fn shoot_bvp(
    p: &SecondOrderProblem,
    boundary: [&ConfigPoint; 4],
    guess: &ShootingGuess,
    n_last: usize,
    settings: &SolverSettings,
) -> Result<(DiscretePath, MultiplierSeq)> {
    if n_last < 4 {
        return Err(VakonError::Precondition(format!("shooting needs N >= 4, got {n_last}")));
    }
    let [q0, q1, qa, qb] = boundary;
    let pts: Vec<&Coords> = [q0, q1, qa, qb, &guess.q2, &guess.q3].iter().map(|q| q.coords()).collect();
    p.check(&pts, &[&guess.lam0, &guess.lam1])?;
    let seed_res = inf_norm(&p.constraint(q0, q1, &guess.q2))
        .max(inf_norm(&p.constraint(q1, &guess.q2, &guess.q3)));
    if !(seed_res <= SHOOT_SEED_TOL) {
        return Err(VakonError::InconsistentSeed {
            residual: seed_res,
            tolerance: SHOOT_SEED_TOL,
        });
    }
    let [_, _, q2, q3] = project_seed(p, [q0, q1, &guess.q2, &guess.q3], settings)?;

    let (n, m) = (p.n(), p.m());
    let pack = |q2: &Coords, q3: &Coords, l0: &Coords, l1: &Coords| {
        let mut z = Coords::zeros(2 * n + 2 * m);
        z.rows_mut(0, n).copy_from(q2);
        z.rows_mut(n, n).copy_from(q3);
        z.rows_mut(2 * n, m).copy_from(l0);
        z.rows_mut(2 * n + m, m).copy_from(l1);
        z
    };
    let window_of = |z: &Coords| -> Result<FlowWindow> {
        Ok(FlowWindow {
            q: [
                q0.clone(),
                q1.clone(),
                ConfigPoint::new(z.rows(0, n).into_owned())?,
                ConfigPoint::new(z.rows(n, n).into_owned())?,
            ],
            lam: [z.rows(2 * n, m).into_owned(), z.rows(2 * n + m, m).into_owned()],
        })
    };
    let shoot = |z: &Coords| -> Result<Coords> {
        let w = window_of(z)?;
        let seed0 = p.constraint(q0, q1, &w.q[2]);
        let seed1 = p.constraint(q1, &w.q[2], &w.q[3]);
        let (points, _) = flow2_unchecked(p, w, n_last, settings)?;
        let mut r = Coords::zeros(2 * n + 2 * m);
        r.rows_mut(0, n).copy_from(&(points[n_last - 1].coords() - qa.coords()));
        r.rows_mut(n, n).copy_from(&(points[n_last].coords() - qb.coords()));
        r.rows_mut(2 * n, m).copy_from(&seed0);
        r.rows_mut(2 * n + m, m).copy_from(&seed1);
        Ok(r)
    };
    let z0 = pack(&q2, &q3, &guess.lam0, &guess.lam1);
    let outer = settings.with_newton_tol(settings.newton_tol * 100.0);
    let out = damped_newton(
        z0,
        shoot,
        |z| fd_jacobian_of(z, 2 * n + 2 * m, 1e-7, shoot),
        &outer,
    )?;
    let (points, lams) = flow2_unchecked(p, window_of(&out.z)?, n_last, settings)?;
    Ok((DiscretePath::new(points, p.time_step)?, MultiplierSeq::new(lams)?))
}
