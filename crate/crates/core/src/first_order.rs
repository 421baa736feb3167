//! First-order discrete vakonomic mechanics on `Q x Q`.
//!
//! Critical points of `sum_k L_d(q_k, q_{k+1})` subject to
//! `Phi_d(q_k, q_{k+1}) = 0` satisfy, for every interior node,
//!
//! ```text
//! D1 L_d(q_k, q_{k+1}) + D2 L_d(q_{k-1}, q_k)
//!     + lambda^k D1 Phi_d(q_k, q_{k+1}) + lambda^{k-1} D2 Phi_d(q_{k-1}, q_k) = 0
//! Phi_d(q_k, q_{k+1}) = 0
//! ```
//!
//! [`step1`] solves these `n + m` equations for `(q_{k+1}, lambda^k)`,
//! which defines the discrete flow `(q_{k-1}, q_k, lambda^{k-1}) -> (q_k, q_{k+1}, lambda^k)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, VakonError};
use crate::linalg::{damped_newton, inf_norm};
use crate::numdiff::{SlottedScalarFn, SlottedVectorFn};
use crate::types::{ConfigPoint, Coords, DiscretePath, MultiplierSeq, SolverSettings};

/// A discrete Lagrangian on `Q x Q` with `m` constraints on `Q x Q`.
#[derive(Clone)]
pub struct FirstOrderProblem {
    lagrangian: Arc<dyn SlottedScalarFn>,
    constraints: Arc<dyn SlottedVectorFn>,
    h: f64,
}

impl FirstOrderProblem {
    pub fn new(
        lagrangian: Arc<dyn SlottedScalarFn>,
        constraints: Arc<dyn SlottedVectorFn>,
        h: f64,
    ) -> Result<Self> {
        if lagrangian.arity() != 2 || constraints.arity() != 2 {
            return Err(VakonError::Contract("first-order problems need arity-2 functions".into()));
        }
        if lagrangian.dim() != constraints.dim() {
            return Err(VakonError::Contract("Lagrangian and constraints disagree on n".into()));
        }
        if constraints.outputs() > lagrangian.dim() {
            return Err(VakonError::Contract("more constraints than coordinates".into()));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(VakonError::Contract(format!("time step must be positive, got {h}")));
        }
        Ok(Self {
            lagrangian,
            constraints,
            h,
        })
    }

    pub fn n(&self) -> usize {
        self.lagrangian.dim()
    }

    pub fn m(&self) -> usize {
        self.constraints.outputs()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn constraint(&self, q: &Coords, q_next: &Coords) -> Coords {
        self.constraints.eval(&[q, q_next])
    }

    fn check(&self, qs: &[&Coords], lams: &[&Coords]) -> Result<()> {
        if let Some(q) = qs.iter().find(|q| q.len() != self.n()) {
            return Err(VakonError::Contract(format!(
                "point of dimension {} for a problem with n={}",
                q.len(),
                self.n()
            )));
        }
        if let Some(l) = lams.iter().find(|l| l.len() != self.m()) {
            return Err(VakonError::Contract(format!(
                "multiplier of length {} for a problem with m={}",
                l.len(),
                self.m()
            )));
        }
        Ok(())
    }
}

/// Residual of the difference equations at one interior node.
///
/// The first `n` entries are the stationarity rows, the last `m` the
/// constraint `Phi_d(q, q_next)`.
pub fn residual1(
    p: &FirstOrderProblem,
    q_prev: &Coords,
    q: &Coords,
    q_next: &Coords,
    lam_prev: &Coords,
    lam: &Coords,
    settings: &SolverSettings,
) -> Result<Coords> {
    p.check(&[q_prev, q, q_next], &[lam_prev, lam])?;
    let (n, m) = (p.n(), p.m());
    let fwd = [q, q_next];
    let bwd = [q_prev, q];
    let stat = p.lagrangian.partial(0, &fwd, settings)?
        + p.lagrangian.partial(1, &bwd, settings)?
        + p.constraints.jacobian(0, &fwd, settings)?.transpose() * lam
        + p.constraints.jacobian(1, &bwd, settings)?.transpose() * lam_prev;
    let mut out = Coords::zeros(n + m);
    out.rows_mut(0, n).copy_from(&stat);
    out.rows_mut(n, m).copy_from(&p.constraints.eval(&fwd));
    Ok(out)
}

/// Newton matrix of [`residual1`] in the unknowns `(q_next, lambda)`:
/// `[[D12 L_d + lambda D12 Phi_d, D1 Phi_d^T], [D2 Phi_d, 0]]` at `(q, q_next)`.
pub fn step_matrix1(
    p: &FirstOrderProblem,
    q: &Coords,
    q_next: &Coords,
    lam: &Coords,
    settings: &SolverSettings,
) -> Result<DMatrix<f64>> {
    let (n, m) = (p.n(), p.m());
    let pts = [q, q_next];
    let top_left = p.lagrangian.mixed(0, 1, &pts, settings)?
        + p.constraints.weighted_mixed(0, 1, lam, &pts, settings)?;
    let mut jac = DMatrix::zeros(n + m, n + m);
    jac.view_mut((0, 0), (n, n)).copy_from(&top_left);
    jac.view_mut((0, n), (n, m))
        .copy_from(&p.constraints.jacobian(0, &pts, settings)?.transpose());
    jac.view_mut((n, 0), (m, n))
        .copy_from(&p.constraints.jacobian(1, &pts, settings)?);
    Ok(jac)
}

/// One step of the discrete flow from an explicit Newton starting point.
pub fn step1_from(
    p: &FirstOrderProblem,
    q_prev: &Coords,
    q: &Coords,
    lam_prev: &Coords,
    guess: (&Coords, &Coords),
    settings: &SolverSettings,
) -> Result<(ConfigPoint, Coords)> {
    p.check(&[q_prev, q, guess.0], &[lam_prev, guess.1])?;
    let (n, m) = (p.n(), p.m());
    let mut z0 = Coords::zeros(n + m);
    z0.rows_mut(0, n).copy_from(guess.0);
    z0.rows_mut(n, m).copy_from(guess.1);
    let split = |z: &Coords| (z.rows(0, n).into_owned(), z.rows(n, m).into_owned());
    let out = damped_newton(
        z0,
        |z| {
            let (qn, lam) = split(z);
            residual1(p, q_prev, q, &qn, lam_prev, &lam, settings)
        },
        |z| {
            let (qn, lam) = split(z);
            step_matrix1(p, q, &qn, &lam, settings)
        },
        settings,
    )?;
    let (qn, lam) = split(&out.z);
    Ok((ConfigPoint::new(qn)?, lam))
}

/// One step of the discrete flow, seeded with `2 q - q_prev` and `lam_prev`.
pub fn step1(
    p: &FirstOrderProblem,
    q_prev: &Coords,
    q: &Coords,
    lam_prev: &Coords,
    settings: &SolverSettings,
) -> Result<(ConfigPoint, Coords)> {
    let predictor = q * 2.0 - q_prev;
    step1_from(p, q_prev, q, lam_prev, (&predictor, lam_prev), settings)
}

/// Iterates [`step1`] `steps` times from `(q0, q1, lam0)`.
///
/// Returns `steps + 2` points and `steps + 1` multipliers, `lambda^k` paired
/// with `(q_k, q_{k+1})`; the first multiplier is `lam0`.
pub fn flow1(
    p: &FirstOrderProblem,
    q0: &ConfigPoint,
    q1: &ConfigPoint,
    lam0: &Coords,
    steps: usize,
    settings: &SolverSettings,
) -> Result<(DiscretePath, MultiplierSeq)> {
    p.check(&[q0, q1], &[lam0])?;
    let seed_res = inf_norm(&p.constraint(q0, q1));
    let tolerance = settings.newton_tol * 10.0;
    if seed_res > tolerance {
        return Err(VakonError::InconsistentSeed {
            residual: seed_res,
            tolerance,
        });
    }
    let mut points = vec![q0.clone(), q1.clone()];
    let mut lams = vec![lam0.clone()];
    for k in 1..=steps {
        let (qn, lam) = step1(p, &points[k - 1], &points[k], &lams[k - 1], settings)
            .map_err(|e| VakonError::at_step(k, e))?;
        points.push(qn);
        lams.push(lam);
    }
    Ok((DiscretePath::new(points, p.h)?, MultiplierSeq::new(lams)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FreeParticle;
    use crate::numdiff::{NoConstraints, VectorFn};
    use nalgebra::dvector;

    /// `Phi_d = (y' - y) - c (x' - x)` on the plane.
    fn toy(c: f64) -> FirstOrderProblem {
        let phi = VectorFn::new(2, 2, 1, move |p| {
            dvector![(p[1][1] - p[0][1]) - c * (p[1][0] - p[0][0])]
        });
        FirstOrderProblem::new(Arc::new(FreeParticle::new(2)), Arc::new(phi), 0.1).unwrap()
    }

    fn free() -> FirstOrderProblem {
        FirstOrderProblem::new(
            Arc::new(FreeParticle::new(2)),
            Arc::new(NoConstraints { arity: 2, dim: 2 }),
            0.1,
        )
        .unwrap()
    }

    fn s() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn collinear_equal_increments_have_zero_residual() {
        let c = 0.7;
        let p = toy(c);
        let (a, b, d) = (dvector![0.0, 0.0], dvector![1.0, c], dvector![2.0, 2.0 * c]);
        let lam = dvector![0.4];
        let r = residual1(&p, &a, &b, &d, &lam, &lam, &s()).unwrap();
        assert!(r.amax() < 1e-9, "{r}");
        let r = residual1(&free(), &a, &b, &d, &Coords::zeros(0), &Coords::zeros(0), &s()).unwrap();
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn constraint_value_passes_through() {
        let p = toy(0.0);
        let (a, b) = (dvector![0.0, 0.0], dvector![0.0, 0.0]);
        let d = dvector![0.0, 0.3];
        let zero = dvector![0.0];
        let r = residual1(&p, &a, &b, &d, &zero, &zero, &s()).unwrap();
        assert!((r[2] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn step_continues_the_line() {
        let c = 0.5;
        let p = toy(c);
        let (qn, lam) = step1(&p, &dvector![0.0, 0.0], &dvector![1.0, c], &dvector![0.0], &s()).unwrap();
        assert!((qn.coords() - dvector![2.0, 2.0 * c]).amax() < 1e-10);
        assert!(lam[0].abs() < 1e-10);
        let delta = dvector![0.3, -0.2];
        let (qn, _) = step1(&free(), &Coords::zeros(2), &delta, &Coords::zeros(0), &s()).unwrap();
        assert!((qn.coords() - &delta * 2.0).amax() < 1e-12);
    }

    #[test]
    fn step_enforces_constraint_even_from_violating_seed() {
        let p = toy(1.0);
        let (q_prev, q) = (dvector![0.0, 0.0], dvector![1.0, 0.5]);
        let (qn, lam) = step1(&p, &q_prev, &q, &dvector![0.0], &s()).unwrap();
        assert!(p.constraint(&q, &qn)[0].abs() <= 1e-10);
        let r = residual1(&p, &q_prev, &q, &qn, &dvector![0.0], &lam, &s()).unwrap();
        assert!(r.amax() <= 1e-10);
    }

    #[test]
    fn resolving_from_converged_point_is_idempotent() {
        let p = toy(1.0);
        let (q_prev, q) = (dvector![0.0, 0.0], dvector![1.0, 0.5]);
        let l0 = dvector![0.2];
        let (qn, lam) = step1(&p, &q_prev, &q, &l0, &s()).unwrap();
        let (qn2, lam2) = step1_from(&p, &q_prev, &q, &l0, (qn.coords(), &lam), &s()).unwrap();
        assert!((qn2.coords() - qn.coords()).amax() <= 1e-14);
        assert!((lam2 - lam).amax() <= 1e-14);
    }

    #[test]
    fn flow_is_the_closed_form_line() {
        let c = -0.3;
        let p = toy(c);
        let q0 = ConfigPoint::from_slice(&[0.5, 1.0]).unwrap();
        let q1 = ConfigPoint::from_slice(&[0.75, 1.0 + 0.25 * c]).unwrap();
        let lam0 = dvector![0.8];
        let (path, lams) = flow1(&p, &q0, &q1, &lam0, 10, &s()).unwrap();
        assert_eq!(path.len(), 12);
        for (k, q) in path.points().iter().enumerate() {
            let exact = dvector![0.5 + 0.25 * k as f64, 1.0 + 0.25 * c * k as f64];
            assert!((q.coords() - exact).amax() <= 1e-10);
        }
        for lam in lams.as_slice() {
            assert!((lam - &lam0).amax() <= 1e-10);
        }
        for k in 1..path.len() - 1 {
            let r = residual1(
                &p,
                path.point(k - 1),
                path.point(k),
                path.point(k + 1),
                lams.get(k - 1),
                lams.get(k),
                &s(),
            )
            .unwrap();
            assert!(inf_norm(&r) <= 1e-10);
        }
    }

    #[test]
    fn zero_steps_and_inconsistent_seeds() {
        let p = toy(1.0);
        let q0 = ConfigPoint::from_slice(&[0.0, 0.0]).unwrap();
        let q1 = ConfigPoint::from_slice(&[1.0, 1.0]).unwrap();
        let (path, lams) = flow1(&p, &q0, &q1, &dvector![0.0], 0, &s()).unwrap();
        assert_eq!(path.points(), &[q0.clone(), q1]);
        assert_eq!(lams.len(), 1);
        let bad = ConfigPoint::from_slice(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            flow1(&p, &q0, &bad, &dvector![0.0], 3, &s()),
            Err(VakonError::InconsistentSeed { .. })
        ));
    }

    #[test]
    fn step_matrix_is_regular_for_the_toy() {
        let c = 0.4;
        let p = toy(c);
        let jac = step_matrix1(&p, &dvector![0.0, 0.0], &dvector![1.0, c], &dvector![0.0], &s()).unwrap();
        // det [[-1, 0, c], [0, -1, -1], [-c, 1, 0]] = -(1 + c^2)
        assert!((jac.determinant() + 1.0 + c * c).abs() < 1e-9);
    }
}
