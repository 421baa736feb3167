//! Second-order discrete vakonomic mechanics on `Q x Q x Q`.
//!
//! For the action `sum_k L~_d(q_k, q_{k+1}, q_{k+2})` with constraints
//! `Phi_d(q_k, q_{k+1}, q_{k+2}) = 0`, the extremality conditions at node `k`
//! read
//!
//! ```text
//! D3 L~(q_{k-2}, q_{k-1}, q_k) + D2 L~(q_{k-1}, q_k, q_{k+1}) + D1 L~(q_k, q_{k+1}, q_{k+2})
//!   + lambda^{k-2} D3 Phi + lambda^{k-1} D2 Phi + lambda^k D1 Phi = 0
//! Phi_d(q_k, q_{k+1}, q_{k+2}) = 0
//! ```
//!
//! and, when the matrix returned by [`kkt2`] is regular, they determine
//! `(q_{k+2}, lambda^k)` from the window `(q_{k-2}, ..., q_{k+1}, lambda^{k-2}, lambda^{k-1})`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, VakonError};
use crate::linalg::{damped_newton, inf_norm, project_min_norm, regularity, Regularity};
use crate::numdiff::{SlottedScalarFn, SlottedVectorFn};
use crate::types::{ConfigPoint, Coords, DiscretePath, MultiplierSeq, SolverSettings};

/// A discrete Lagrangian on `Q x Q x Q` with `m` constraints on `Q x Q x Q`.
#[derive(Clone)]
pub struct SecondOrderProblem {
    lagrangian: Arc<dyn SlottedScalarFn>,
    constraints: Arc<dyn SlottedVectorFn>,
    /// Time step of the paths this problem is meant for.
    pub time_step: f64,
}

impl SecondOrderProblem {
    pub fn new(
        lagrangian: Arc<dyn SlottedScalarFn>,
        constraints: Arc<dyn SlottedVectorFn>,
        time_step: f64,
    ) -> Result<Self> {
        if lagrangian.arity() != 3 || constraints.arity() != 3 {
            return Err(VakonError::Contract("second-order problems need arity-3 functions".into()));
        }
        if lagrangian.dim() != constraints.dim() {
            return Err(VakonError::Contract("Lagrangian and constraints disagree on n".into()));
        }
        if constraints.outputs() > lagrangian.dim() {
            return Err(VakonError::Contract("more constraints than coordinates".into()));
        }
        if !(time_step.is_finite() && time_step > 0.0) {
            return Err(VakonError::Contract(format!("time step must be positive, got {time_step}")));
        }
        Ok(Self {
            lagrangian,
            constraints,
            time_step,
        })
    }

    pub fn n(&self) -> usize {
        self.lagrangian.dim()
    }

    pub fn m(&self) -> usize {
        self.constraints.outputs()
    }

    pub fn lagrangian(&self) -> &dyn SlottedScalarFn {
        self.lagrangian.as_ref()
    }

    pub fn constraints(&self) -> &dyn SlottedVectorFn {
        self.constraints.as_ref()
    }

    pub fn constraint(&self, x: &Coords, y: &Coords, z: &Coords) -> Coords {
        self.constraints.eval(&[x, y, z])
    }

    pub(crate) fn check(&self, qs: &[&Coords], lams: &[&Coords]) -> Result<()> {
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

/// Four consecutive points `(q_{k-2}, q_{k-1}, q_k, q_{k+1})` and the two
/// multipliers `(lambda^{k-2}, lambda^{k-1})` they carry.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowWindow {
    pub q: [ConfigPoint; 4],
    pub lam: [Coords; 2],
}

impl FlowWindow {
    /// Largest constraint violation over the two triples inside the window.
    pub fn constraint_residual(&self, p: &SecondOrderProblem) -> f64 {
        let [a, b, c, d] = &self.q;
        inf_norm(&p.constraint(a, b, c)).max(inf_norm(&p.constraint(b, c, d)))
    }

    /// The window one node later.
    pub fn advance(&self, q_next: ConfigPoint, lam_new: Coords) -> Self {
        let [_, b, c, d] = self.q.clone();
        let [_, l1] = self.lam.clone();
        Self {
            q: [b, c, d, q_next],
            lam: [l1, lam_new],
        }
    }
}

/// The two blocks of [`residual2`].
#[derive(Debug, Clone, PartialEq)]
pub struct Residual2 {
    pub stationarity: Coords,
    pub constraint: Coords,
}

impl Residual2 {
    pub fn stacked(&self) -> Coords {
        let (n, m) = (self.stationarity.len(), self.constraint.len());
        let mut out = Coords::zeros(n + m);
        out.rows_mut(0, n).copy_from(&self.stationarity);
        out.rows_mut(n, m).copy_from(&self.constraint);
        out
    }

    pub fn max_norm(&self) -> f64 {
        inf_norm(&self.stationarity).max(inf_norm(&self.constraint))
    }
}

/// Stationarity and constraint residuals at node `k` for the quintuple
/// `q = (q_{k-2}, ..., q_{k+2})` and `lam = (lambda^{k-2}, lambda^{k-1}, lambda^k)`.
pub fn residual2_parts(
    p: &SecondOrderProblem,
    q: [&Coords; 5],
    lam: [&Coords; 3],
    settings: &SolverSettings,
) -> Result<Residual2> {
    p.check(&q, &lam)?;
    let t0 = [q[0], q[1], q[2]];
    let t1 = [q[1], q[2], q[3]];
    let t2 = [q[2], q[3], q[4]];
    let (l, c) = (&p.lagrangian, &p.constraints);
    let stationarity = l.partial(2, &t0, settings)?
        + l.partial(1, &t1, settings)?
        + l.partial(0, &t2, settings)?
        + c.jacobian(2, &t0, settings)?.transpose() * lam[0]
        + c.jacobian(1, &t1, settings)?.transpose() * lam[1]
        + c.jacobian(0, &t2, settings)?.transpose() * lam[2];
    Ok(Residual2 {
        stationarity,
        constraint: c.eval(&t2),
    })
}

/// [`residual2_parts`] stacked into one vector of length `n + m`.
pub fn residual2(
    p: &SecondOrderProblem,
    q: [&Coords; 5],
    lam: [&Coords; 3],
    settings: &SolverSettings,
) -> Result<Coords> {
    residual2_parts(p, q, lam, settings).map(|r| r.stacked())
}

/// The Newton matrix of [`residual2`] together with its regularity data.
#[derive(Debug, Clone, PartialEq)]
pub struct Kkt {
    pub matrix: DMatrix<f64>,
    pub det: f64,
    /// Determinant after row and column equilibration.
    pub relative_det: f64,
    pub regularity: Regularity,
}

/// Regularity matrix at the triple `(x, y, z)`:
///
/// ```text
/// [ D13 L~ + lambda . D13 Phi   (D1 Phi)^T ]
/// [ D3 Phi                      0          ]
/// ```
///
/// with `D13` indexed `[x-component, z-component]`. This is the Jacobian of
/// [`residual2`] with respect to `(q_{k+2}, lambda^k)` when `(x, y, z)` is
/// the newest triple.
pub fn kkt2(
    p: &SecondOrderProblem,
    x: &Coords,
    y: &Coords,
    z: &Coords,
    lam: &Coords,
    settings: &SolverSettings,
) -> Result<Kkt> {
    p.check(&[x, y, z], &[lam])?;
    let (n, m) = (p.n(), p.m());
    let pts = [x, y, z];
    let d13 = p.lagrangian.mixed(0, 2, &pts, settings)?
        + p.constraints.weighted_mixed(0, 2, lam, &pts, settings)?;
    let mut matrix = DMatrix::zeros(n + m, n + m);
    matrix.view_mut((0, 0), (n, n)).copy_from(&d13);
    matrix
        .view_mut((0, n), (n, m))
        .copy_from(&p.constraints.jacobian(0, &pts, settings)?.transpose());
    matrix
        .view_mut((n, 0), (m, n))
        .copy_from(&p.constraints.jacobian(2, &pts, settings)?);
    let reg = regularity(&matrix);
    Ok(Kkt {
        matrix,
        det: reg.det,
        relative_det: reg.relative_det,
        regularity: reg,
    })
}

fn seed_tolerance(settings: &SolverSettings) -> f64 {
    settings.newton_tol * 10.0
}

/// Newton solve for `(q_{k+2}, lambda^k)` from an explicit starting point.
/// Does not check the window constraints.
pub(crate) fn solve_step(
    p: &SecondOrderProblem,
    w: &FlowWindow,
    guess: (&Coords, &Coords),
    settings: &SolverSettings,
) -> Result<(ConfigPoint, Coords)> {
    let (n, m) = (p.n(), p.m());
    let [a, b, c, d] = &w.q;
    let (a, b, c, d) = (a.coords(), b.coords(), c.coords(), d.coords());
    let [l0, l1] = &w.lam;
    let mut z0 = Coords::zeros(n + m);
    z0.rows_mut(0, n).copy_from(guess.0);
    z0.rows_mut(n, m).copy_from(guess.1);
    let split = |z: &Coords| (z.rows(0, n).into_owned(), z.rows(n, m).into_owned());
    let out = damped_newton(
        z0,
        |z| {
            let (qn, lam) = split(z);
            residual2(p, [a, b, c, d, &qn], [l0, l1, &lam], settings)
        },
        |z| {
            let (qn, lam) = split(z);
            kkt2(p, c, d, &qn, &lam, settings).map(|k| k.matrix)
        },
        settings,
    )?;
    let (qn, lam) = split(&out.z);
    Ok((ConfigPoint::new(qn)?, lam))
}

fn predictor(w: &FlowWindow) -> (Coords, Coords) {
    (w.q[3].coords() * 2.0 - w.q[2].coords(), w.lam[1].clone())
}

/// One step of the discrete flow: solves for `(q_{k+2}, lambda^k)`.
///
/// Newton starts from `2 q_{k+1} - q_k` and `lambda^{k-1}`.
pub fn step2(
    p: &SecondOrderProblem,
    window: &FlowWindow,
    settings: &SolverSettings,
) -> Result<(ConfigPoint, Coords)> {
    let qs: Vec<&Coords> = window.q.iter().map(|q| q.coords()).collect();
    p.check(&qs, &[&window.lam[0], &window.lam[1]])?;
    let residual = window.constraint_residual(p);
    let tolerance = seed_tolerance(settings);
    if !(residual <= tolerance) {
        return Err(VakonError::InconsistentSeed { residual, tolerance });
    }
    let (qg, lg) = predictor(window);
    solve_step(p, window, (&qg, &lg), settings)
}

/// Iterates the flow without the seed check; used by shooting, which
/// evaluates the flow at seeds that are only approximately consistent.
pub(crate) fn flow2_unchecked(
    p: &SecondOrderProblem,
    window: FlowWindow,
    n_last: usize,
    settings: &SolverSettings,
) -> Result<(Vec<ConfigPoint>, Vec<Coords>)> {
    let mut w = window;
    let mut points: Vec<ConfigPoint> = w.q.to_vec();
    let mut lams: Vec<Coords> = w.lam.to_vec();
    for k in 2..=n_last.saturating_sub(2) {
        let (qg, lg) = predictor(&w);
        let (qn, lam) =
            solve_step(p, &w, (&qg, &lg), settings).map_err(|e| VakonError::at_step(k, e))?;
        points.push(qn.clone());
        lams.push(lam.clone());
        w = w.advance(qn, lam);
    }
    Ok((points, lams))
}

/// The discrete flow from `(q0, q1, q2, q3, lam0, lam1)` up to node `n_last`.
///
/// Returns `n_last + 1` points and the multipliers `lambda^0 ... lambda^{n_last - 2}`.
pub fn flow2(
    p: &SecondOrderProblem,
    q: [&ConfigPoint; 4],
    lam: [&Coords; 2],
    n_last: usize,
    settings: &SolverSettings,
) -> Result<(DiscretePath, MultiplierSeq)> {
    if n_last < 4 {
        return Err(VakonError::Precondition(format!(
            "flow2 needs N >= 4, got {n_last}"
        )));
    }
    let window = FlowWindow {
        q: [q[0].clone(), q[1].clone(), q[2].clone(), q[3].clone()],
        lam: [lam[0].clone(), lam[1].clone()],
    };
    let qs: Vec<&Coords> = window.q.iter().map(|q| q.coords()).collect();
    p.check(&qs, &lam)?;
    let residual = window.constraint_residual(p);
    let tolerance = seed_tolerance(settings);
    if !(residual <= tolerance) {
        return Err(VakonError::InconsistentSeed { residual, tolerance });
    }
    let (points, lams) = flow2_unchecked(p, window, n_last, settings)?;
    Ok((
        DiscretePath::new(points, p.time_step)?,
        MultiplierSeq::new(lams)?,
    ))
}

/// Moves `q2` and then `q3` by the smallest amount that satisfies
/// `Phi_d(q0, q1, q2) = 0` and `Phi_d(q1, q2, q3) = 0`.
pub fn project_seed(
    p: &SecondOrderProblem,
    q: [&ConfigPoint; 4],
    settings: &SolverSettings,
) -> Result<[ConfigPoint; 4]> {
    let qs: Vec<&Coords> = q.iter().map(|q| q.coords()).collect();
    p.check(&qs, &[])?;
    let (q0, q1) = (q[0].coords(), q[1].coords());
    let q2 = project_min_norm(
        q[2].coords().clone(),
        |z| Ok(p.constraint(q0, q1, z)),
        |z| p.constraints.jacobian(2, &[q0, q1, z], settings),
        settings,
    )?;
    let q3 = project_min_norm(
        q[3].coords().clone(),
        |z| Ok(p.constraint(q1, &q2, z)),
        |z| p.constraints.jacobian(2, &[q1, &q2, z], settings),
        settings,
    )?;
    Ok([q[0].clone(), q[1].clone(), ConfigPoint::new(q2)?, ConfigPoint::new(q3)?])
}

/// Largest stationarity and constraint residuals over the interior nodes
/// `2 <= k <= N - 2` of a path with its multipliers.
pub fn path_residuals(
    p: &SecondOrderProblem,
    path: &DiscretePath,
    lams: &MultiplierSeq,
    settings: &SolverSettings,
) -> Result<Vec<Residual2>> {
    let len = path.len();
    if len < 5 || lams.len() + 2 < len - 1 {
        return Err(VakonError::Precondition(format!(
            "need at least 5 points and N-1 multipliers, got {len} and {}",
            lams.len()
        )));
    }
    (2..=len - 3)
        .map(|k| {
            let q = [k - 2, k - 1, k, k + 1, k + 2].map(|i| path.point(i).coords());
            let lam = [k - 2, k - 1, k].map(|i| lams.get(i));
            residual2_parts(p, q, lam, settings)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{cubic_sequence, SecondDifference};
    use crate::numdiff::{NoConstraints, ScalarFn, VectorFn};
    use crate::linalg::fd_jacobian_of;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn toy(dim: usize) -> SecondOrderProblem {
        SecondOrderProblem::new(
            Arc::new(SecondDifference { dim }),
            Arc::new(NoConstraints { arity: 3, dim }),
            0.1,
        )
        .unwrap()
    }

    /// A smooth nonlinear problem with one constraint, for Jacobian checks.
    fn wavy() -> SecondOrderProblem {
        let l = ScalarFn::new(3, 2, |p| {
            let a = p[2] - p[1] * 2.0 + p[0];
            0.5 * a.norm_squared() + 0.1 * (p[0][0] * p[2][1]).sin() + 0.05 * p[1][0].powi(2)
        });
        let c = VectorFn::new(3, 2, 1, |p| {
            dvector![p[2][1] - 2.0 * p[1][1] + p[0][1] - 0.3 * (p[2][0] - p[0][0]) + 0.05 * (p[0][1] * p[2][0]).sin()]
        });
        SecondOrderProblem::new(Arc::new(l), Arc::new(c), 0.1).unwrap()
    }

    fn s() -> SolverSettings {
        SolverSettings::default()
    }

    fn empty() -> Coords {
        Coords::zeros(0)
    }

    fn pt(v: Coords) -> ConfigPoint {
        ConfigPoint::new(v).unwrap()
    }

    #[test]
    fn fourth_difference_zero_gives_zero_residual() {
        let p = toy(2);
        let c = [dvector![0.2, -1.0], dvector![1.0, 0.5], dvector![-0.4, 0.1], dvector![0.03, 0.2]];
        let q = cubic_sequence([&c[0], &c[1], &c[2], &c[3]], 5);
        let e = empty();
        let r = residual2(&p, [&q[0], &q[1], &q[2], &q[3], &q[4]], [&e, &e, &e], &s()).unwrap();
        assert!(r.amax() <= 1e-10, "{r}");
    }

    #[test]
    fn stationarity_rows_are_the_fourth_difference() {
        let p = toy(1);
        let q: Vec<Coords> = [0.3, -1.2, 2.0, 0.7, 5.0].iter().map(|v| dvector![*v]).collect();
        let e = empty();
        let r = residual2(&p, [&q[0], &q[1], &q[2], &q[3], &q[4]], [&e, &e, &e], &s()).unwrap();
        let stencil = q[4][0] - 4.0 * q[3][0] + 6.0 * q[2][0] - 4.0 * q[1][0] + q[0][0];
        assert!((r[0] - stencil).abs() <= 1e-12);
    }

    #[test]
    fn constant_lagrangian_and_zero_constraints() {
        let l = ScalarFn::new(3, 2, |_| 3.0);
        let c = VectorFn::new(3, 2, 1, |_| dvector![0.0]);
        let p = SecondOrderProblem::new(Arc::new(l), Arc::new(c), 0.1).unwrap();
        let q = dvector![0.4, 0.9];
        let lam = dvector![2.0];
        let r = residual2(&p, [&q, &q, &q, &q, &q], [&lam, &lam, &lam], &s()).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.amax() <= 1e-12);
    }

    #[test]
    fn toy_kkt_is_identity() {
        let p = toy(2);
        let (x, y, z) = (dvector![1.0, 2.0], dvector![0.0, 1.0], dvector![3.0, -1.0]);
        let k = kkt2(&p, &x, &y, &z, &empty(), &s()).unwrap();
        assert_eq!(k.matrix, DMatrix::identity(2, 2));
        assert_eq!(k.det, 1.0);
    }

    #[test]
    fn constraint_only_on_middle_slot_is_singular() {
        let c = VectorFn::new(3, 2, 1, |p| dvector![p[1][0] + p[1][1]]);
        let p = SecondOrderProblem::new(Arc::new(SecondDifference { dim: 2 }), Arc::new(c), 0.1).unwrap();
        let q = dvector![0.1, 0.2];
        let k = kkt2(&p, &q, &q, &q, &dvector![0.5], &s()).unwrap();
        assert!(k.det.abs() < 1e-12);
        assert!(k.regularity.is_singular(s().singular_tol));
    }

    #[test]
    fn affine_window_extends_affinely() {
        let p = toy(2);
        let v = dvector![0.7, -1.3];
        let w = FlowWindow {
            q: [0.0, 1.0, 2.0, 3.0].map(|t| pt(&v * t)),
            lam: [empty(), empty()],
        };
        let (qn, lam) = step2(&p, &w, &s()).unwrap();
        assert!((qn.coords() - &v * 4.0).amax() <= 1e-12);
        assert_eq!(lam.len(), 0);
    }

    #[test]
    fn step_satisfies_fourth_difference_identity() {
        let p = toy(2);
        let c = [dvector![0.2, -1.0], dvector![1.0, 0.5], dvector![-0.4, 0.1], dvector![0.03, 0.2]];
        let q = cubic_sequence([&c[0], &c[1], &c[2], &c[3]], 5);
        let w = FlowWindow {
            q: [pt(q[0].clone()), pt(q[1].clone()), pt(q[2].clone()), pt(q[3].clone())],
            lam: [empty(), empty()],
        };
        let (qn, _) = step2(&p, &w, &s()).unwrap();
        let stencil = qn.coords() - &q[3] * 4.0 + &q[2] * 6.0 - &q[1] * 4.0 + &q[0];
        assert!(stencil.amax() <= 1e-12);
        assert!((qn.coords() - &q[4]).amax() <= 1e-10);
    }

    #[test]
    fn inconsistent_window_is_rejected() {
        let c = VectorFn::new(3, 1, 1, |p| dvector![p[2][0] - p[1][0]]);
        let p = SecondOrderProblem::new(Arc::new(SecondDifference { dim: 1 }), Arc::new(c), 0.1).unwrap();
        let w = FlowWindow {
            q: [0.0, 0.0, 1.0, 1.0].map(|v| pt(dvector![v])),
            lam: [dvector![0.0], dvector![0.0]],
        };
        assert!(matches!(step2(&p, &w, &s()), Err(VakonError::InconsistentSeed { .. })));
    }

    #[test]
    fn flow_bookkeeping() {
        let p = toy(1);
        let q = [0.0, 1.0, 2.0, 3.0].map(|v| pt(dvector![v]));
        let e = empty();
        let (path, lams) = flow2(&p, [&q[0], &q[1], &q[2], &q[3]], [&e, &e], 4, &s()).unwrap();
        assert_eq!(path.len(), 5);
        assert_eq!(lams.len(), 3);
        let (path, _) = flow2(&p, [&q[0], &q[1], &q[2], &q[3]], [&e, &e], 30, &s()).unwrap();
        for (k, qk) in path.points().iter().enumerate() {
            assert!((qk[0] - k as f64).abs() <= 1e-10);
        }
        assert!(matches!(
            flow2(&p, [&q[0], &q[1], &q[2], &q[3]], [&e, &e], 3, &s()),
            Err(VakonError::Precondition(_))
        ));
    }

    #[test]
    fn flow_equals_repeated_steps_bitwise() {
        let p = wavy();
        let seed = [pt(dvector![0.0, 0.0]), pt(dvector![0.1, 0.03]), pt(dvector![0.2, 0.05]), pt(dvector![0.3, 0.1])];
        let seed = project_seed(&p, [&seed[0], &seed[1], &seed[2], &seed[3]], &s()).unwrap();
        let l = dvector![0.1];
        let (path, lams) = flow2(&p, [&seed[0], &seed[1], &seed[2], &seed[3]], [&l, &l], 8, &s()).unwrap();
        let mut w = FlowWindow { q: seed.clone(), lam: [l.clone(), l.clone()] };
        for k in 2..=6 {
            let (qn, lam) = step2(&p, &w, &s()).unwrap();
            assert_eq!(&qn, path.point(k + 2));
            assert_eq!(&lam, lams.get(k));
            w = w.advance(qn, lam);
        }
        let again = flow2(&p, [&seed[0], &seed[1], &seed[2], &seed[3]], [&l, &l], 8, &s()).unwrap();
        assert_eq!(again.0, path);
        for r in path_residuals(&p, &path, &lams, &s()).unwrap() {
            assert!(r.max_norm() <= 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kkt_is_the_newton_jacobian(
            v in proptest::collection::vec(-1.0f64..1.0, 11)
        ) {
            let p = wavy();
            let q: Vec<Coords> = (0..5).map(|i| dvector![v[2 * i], v[2 * i + 1]]).collect();
            let (l0, l1) = (dvector![0.3], dvector![-0.2]);
            let st = s();
            let z = dvector![q[4][0], q[4][1], v[10]];
            let fd = fd_jacobian_of(&z, 3, 1e-6, |z| {
                let qn = z.rows(0, 2).into_owned();
                let lam = z.rows(2, 1).into_owned();
                residual2(&p, [&q[0], &q[1], &q[2], &q[3], &qn], [&l0, &l1, &lam], &st)
            }).unwrap();
            let k = kkt2(&p, &q[2], &q[3], &q[4], &dvector![v[10]], &st).unwrap();
            let err = (&k.matrix - &fd).amax() / (1.0 + k.matrix.amax());
            prop_assert!(err <= 1e-5, "err {err}");
        }

        #[test]
        fn unconstrained_residual_is_the_plain_stencil(
            v in proptest::collection::vec(-2.0f64..2.0, 5)
        ) {
            let l = ScalarFn::new(3, 1, |p| (p[0][0] * p[1][0]).cos() + p[2][0].powi(3) * p[1][0]);
            let p = SecondOrderProblem::new(Arc::new(l), Arc::new(NoConstraints { arity: 3, dim: 1 }), 0.1).unwrap();
            let q: Vec<Coords> = v.iter().map(|x| dvector![*x]).collect();
            let st = s();
            let e = empty();
            let r = residual2(&p, [&q[0], &q[1], &q[2], &q[3], &q[4]], [&e, &e, &e], &st).unwrap();
            let ls = p.lagrangian();
            let direct = ls.partial(2, &[&q[0], &q[1], &q[2]], &st).unwrap()
                + ls.partial(1, &[&q[1], &q[2], &q[3]], &st).unwrap()
                + ls.partial(0, &[&q[2], &q[3], &q[4]], &st).unwrap();
            prop_assert_eq!(r, direct);
        }
    }
}
