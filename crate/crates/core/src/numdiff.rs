//! Finite-difference derivatives of multi-slot functions and an
//! analytic-versus-numeric derivative checker.
//!
//! A slotted function takes a tuple of configuration points
//! `(q_1, ..., q_arity)`, each of dimension `dim`. The trait methods
//! `partial`, `mixed`, `jacobian` and `weighted_mixed` default to central
//! differences; models with closed-form derivatives override them.

use nalgebra::DMatrix;

use crate::error::{Result, VakonError};
use crate::types::{Coords, SolverSettings};

/// Scalar function of `arity` configuration slots.
pub trait SlottedScalarFn: Send + Sync {
    fn arity(&self) -> usize;
    fn dim(&self) -> usize;
    fn eval(&self, pts: &[&Coords]) -> f64;

    /// Gradient with respect to slot `slot`.
    fn partial(&self, slot: usize, pts: &[&Coords], settings: &SolverSettings) -> Result<Coords> {
        fd_partial(self, slot, pts, settings)
    }

    /// Matrix `d^2 f / d(slot_i)_r d(slot_j)_s`, indexed `[r, s]`.
    fn mixed(
        &self,
        slot_i: usize,
        slot_j: usize,
        pts: &[&Coords],
        settings: &SolverSettings,
    ) -> Result<DMatrix<f64>> {
        fd_mixed_second(self, slot_i, slot_j, pts, settings)
    }
}

/// Vector-valued function of `arity` configuration slots with `outputs` components.
pub trait SlottedVectorFn: Send + Sync {
    fn arity(&self) -> usize;
    fn dim(&self) -> usize;
    fn outputs(&self) -> usize;
    fn eval(&self, pts: &[&Coords]) -> Coords;

    /// `outputs x dim` Jacobian with respect to slot `slot`.
    fn jacobian(&self, slot: usize, pts: &[&Coords], settings: &SolverSettings) -> Result<DMatrix<f64>> {
        fd_vector_jacobian(self, slot, pts, settings)
    }

    /// `sum_a w_a d^2 f^a / d(slot_i) d(slot_j)`.
    fn weighted_mixed(
        &self,
        slot_i: usize,
        slot_j: usize,
        weights: &Coords,
        pts: &[&Coords],
        settings: &SolverSettings,
    ) -> Result<DMatrix<f64>> {
        let weighted = Weighted { f: self, weights };
        fd_mixed_second(&weighted, slot_i, slot_j, pts, settings)
    }
}

struct Weighted<'a, F: ?Sized> {
    f: &'a F,
    weights: &'a Coords,
}

impl<F: SlottedVectorFn + ?Sized> SlottedScalarFn for Weighted<'_, F> {
    fn arity(&self) -> usize {
        self.f.arity()
    }
    fn dim(&self) -> usize {
        self.f.dim()
    }
    fn eval(&self, pts: &[&Coords]) -> f64 {
        self.f.eval(pts).dot(self.weights)
    }
}

/// Closure-backed [`SlottedScalarFn`] without analytic derivatives.
pub struct ScalarFn<F> {
    arity: usize,
    dim: usize,
    f: F,
}

impl<F> ScalarFn<F>
where
    F: Fn(&[&Coords]) -> f64 + Send + Sync,
{
    pub fn new(arity: usize, dim: usize, f: F) -> Self {
        Self { arity, dim, f }
    }
}

impl<F> SlottedScalarFn for ScalarFn<F>
where
    F: Fn(&[&Coords]) -> f64 + Send + Sync,
{
    fn arity(&self) -> usize {
        self.arity
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, pts: &[&Coords]) -> f64 {
        (self.f)(pts)
    }
}

/// Closure-backed [`SlottedVectorFn`] without analytic derivatives.
pub struct VectorFn<F> {
    arity: usize,
    dim: usize,
    outputs: usize,
    f: F,
}

impl<F> VectorFn<F>
where
    F: Fn(&[&Coords]) -> Coords + Send + Sync,
{
    pub fn new(arity: usize, dim: usize, outputs: usize, f: F) -> Self {
        Self {
            arity,
            dim,
            outputs,
            f,
        }
    }
}

impl<F> SlottedVectorFn for VectorFn<F>
where
    F: Fn(&[&Coords]) -> Coords + Send + Sync,
{
    fn arity(&self) -> usize {
        self.arity
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn outputs(&self) -> usize {
        self.outputs
    }
    fn eval(&self, pts: &[&Coords]) -> Coords {
        (self.f)(pts)
    }
}

/// The empty constraint family (`m = 0`).
pub struct NoConstraints {
    pub arity: usize,
    pub dim: usize,
}

impl SlottedVectorFn for NoConstraints {
    fn arity(&self) -> usize {
        self.arity
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn outputs(&self) -> usize {
        0
    }
    fn eval(&self, _pts: &[&Coords]) -> Coords {
        Coords::zeros(0)
    }
    fn jacobian(&self, _slot: usize, _pts: &[&Coords], _s: &SolverSettings) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(0, self.dim))
    }
    fn weighted_mixed(
        &self,
        _i: usize,
        _j: usize,
        _w: &Coords,
        _pts: &[&Coords],
        _s: &SolverSettings,
    ) -> Result<DMatrix<f64>> {
        Ok(DMatrix::zeros(self.dim, self.dim))
    }
}

pub(crate) fn check_shape(arity: usize, dim: usize, pts: &[&Coords]) -> Result<()> {
    if pts.len() != arity {
        return Err(VakonError::Contract(format!(
            "expected {arity} configuration slots, got {}",
            pts.len()
        )));
    }
    if let Some(k) = pts.iter().position(|p| p.len() != dim) {
        return Err(VakonError::Contract(format!(
            "slot {k} has dimension {} but the function expects {dim}",
            pts[k].len()
        )));
    }
    Ok(())
}

fn check_slot(arity: usize, slot: usize) -> Result<()> {
    if slot >= arity {
        return Err(VakonError::Contract(format!(
            "slot {slot} out of range for arity {arity}"
        )));
    }
    Ok(())
}

fn finite_or_domain(v: f64, pts: &[Coords]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(VakonError::NumericDomain {
            coords: pts.iter().flat_map(|p| p.iter().cloned()).collect(),
        })
    }
}

fn eval_owned<F: SlottedScalarFn + ?Sized>(f: &F, pts: &[Coords]) -> Result<f64> {
    let refs: Vec<&Coords> = pts.iter().collect();
    finite_or_domain(f.eval(&refs), pts)
}

/// One Richardson step on central differences at steps `d` and `d/2`;
/// cancels the `d^2` error term.
fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Central-difference gradient with respect to one slot, other slots frozen.
pub fn fd_partial<F: SlottedScalarFn + ?Sized>(
    f: &F,
    slot: usize,
    pts: &[&Coords],
    settings: &SolverSettings,
) -> Result<Coords> {
    check_shape(f.arity(), f.dim(), pts)?;
    check_slot(f.arity(), slot)?;
    let mut work: Vec<Coords> = pts.iter().map(|p| (*p).clone()).collect();
    let mut grad = Coords::zeros(f.dim());
    for r in 0..f.dim() {
        let x = work[slot][r];
        let d = settings.fd_step_first * (1.0 + x.abs());
        let mut central = |d: f64| -> Result<f64> {
            let (xp, xm) = (x + d, x - d);
            work[slot][r] = xp;
            let fp = eval_owned(f, &work)?;
            work[slot][r] = xm;
            let fm = eval_owned(f, &work)?;
            work[slot][r] = x;
            Ok((fp - fm) / (xp - xm))
        };
        let coarse = central(d)?;
        let fine = central(0.5 * d)?;
        grad[r] = richardson(coarse, fine);
    }
    Ok(grad)
}

/// Mixed second partials by nested central differences.
pub fn fd_mixed_second<F: SlottedScalarFn + ?Sized>(
    f: &F,
    slot_i: usize,
    slot_j: usize,
    pts: &[&Coords],
    settings: &SolverSettings,
) -> Result<DMatrix<f64>> {
    check_shape(f.arity(), f.dim(), pts)?;
    check_slot(f.arity(), slot_i)?;
    check_slot(f.arity(), slot_j)?;
    let n = f.dim();
    let mut work: Vec<Coords> = pts.iter().map(|p| (*p).clone()).collect();
    let step = |x: f64| settings.fd_step_second * (1.0 + x.abs());
    let mut out = DMatrix::zeros(n, n);
    for r in 0..n {
        for s in 0..n {
            if slot_i == slot_j && r == s {
                let x = work[slot_i][r];
                let d = step(x);
                let (xp, xm) = (x + d, x - d);
                let f0 = eval_owned(f, &work)?;
                work[slot_i][r] = xp;
                let fp = eval_owned(f, &work)?;
                work[slot_i][r] = xm;
                let fm = eval_owned(f, &work)?;
                work[slot_i][r] = x;
                let (dp, dm) = (xp - x, x - xm);
                out[(r, s)] = 2.0 * (fp * dm + fm * dp - f0 * (dp + dm)) / (dp * dm * (dp + dm));
                continue;
            }
            let (a, b) = (work[slot_i][r], work[slot_j][s]);
            let (da, db) = (step(a), step(b));
            let (ap, am, bp, bm) = (a + da, a - da, b + db, b - db);
            let mut corner = |va: f64, vb: f64| -> Result<f64> {
                work[slot_i][r] = va;
                work[slot_j][s] = vb;
                let v = eval_owned(f, &work);
                work[slot_i][r] = a;
                work[slot_j][s] = b;
                v
            };
            let fpp = corner(ap, bp)?;
            let fpm = corner(ap, bm)?;
            let fmp = corner(am, bp)?;
            let fmm = corner(am, bm)?;
            out[(r, s)] = ((fpp - fpm) - (fmp - fmm)) / ((ap - am) * (bp - bm));
        }
    }
    Ok(out)
}

/// Component-wise central-difference Jacobian of a vector function.
pub fn fd_vector_jacobian<F: SlottedVectorFn + ?Sized>(
    f: &F,
    slot: usize,
    pts: &[&Coords],
    settings: &SolverSettings,
) -> Result<DMatrix<f64>> {
    check_shape(f.arity(), f.dim(), pts)?;
    check_slot(f.arity(), slot)?;
    let mut work: Vec<Coords> = pts.iter().map(|p| (*p).clone()).collect();
    let mut jac = DMatrix::zeros(f.outputs(), f.dim());
    let eval = |w: &[Coords]| -> Result<Coords> {
        let refs: Vec<&Coords> = w.iter().collect();
        let v = f.eval(&refs);
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(VakonError::NumericDomain {
                coords: w.iter().flat_map(|p| p.iter().cloned()).collect(),
            })
        }
    };
    for r in 0..f.dim() {
        let x = work[slot][r];
        let d = settings.fd_step_first * (1.0 + x.abs());
        let mut central = |d: f64| -> Result<Coords> {
            let (xp, xm) = (x + d, x - d);
            work[slot][r] = xp;
            let fp = eval(&work)?;
            work[slot][r] = xm;
            let fm = eval(&work)?;
            work[slot][r] = x;
            Ok((fp - fm) / (xp - xm))
        };
        let coarse = central(d)?;
        let fine = central(0.5 * d)?;
        let col = coarse.zip_map(&fine, richardson);
        jac.set_column(r, &col);
    }
    Ok(jac)
}

/// Max over samples of `|analytic - fd|_inf / (1 + |analytic|_inf)`.
pub fn check_derivatives<A, F>(
    analytic: A,
    f: &F,
    slot: usize,
    samples: &[Vec<Coords>],
    settings: &SolverSettings,
) -> Result<f64>
where
    A: Fn(&[&Coords]) -> Coords,
    F: SlottedScalarFn + ?Sized,
{
    if samples.is_empty() {
        return Err(VakonError::Precondition(
            "derivative check needs at least one sample".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for sample in samples {
        let refs: Vec<&Coords> = sample.iter().collect();
        let exact = analytic(&refs);
        let approx = fd_partial(f, slot, &refs, settings)?;
        let err = (&exact - &approx).amax() / (1.0 + exact.amax());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn constant_has_zero_gradient() {
        let f = ScalarFn::new(2, 2, |_| 3.5);
        let (x, y) = (dvector![0.3, -1.0], dvector![2.0, 0.1]);
        let g = fd_partial(&f, 0, &[&x, &y], &settings()).unwrap();
        assert_eq!(g, Coords::zeros(2));
    }

    #[test]
    fn linear_in_second_slot_recovers_coefficients() {
        let c = dvector![1.5, -0.25];
        let cc = c.clone();
        let f = ScalarFn::new(2, 2, move |p| cc.dot(p[1]));
        let (x, y) = (dvector![0.3, -1.0], dvector![0.75, 0.5]);
        let g = fd_partial(&f, 1, &[&x, &y], &settings()).unwrap();
        assert!((g - c).amax() <= 1e-12);
    }

    #[test]
    fn half_squared_distance_gradient() {
        let f = ScalarFn::new(2, 2, |p| 0.5 * (p[1] - p[0]).norm_squared());
        let (x, y) = (dvector![0.3, -0.2], dvector![1.1, 0.4]);
        let g = fd_partial(&f, 0, &[&x, &y], &settings()).unwrap();
        let exact = &x - &y;
        assert!((g - &exact).amax() <= 1e-8 * exact.amax());
    }

    #[test]
    fn bilinear_mixed_is_the_matrix() {
        let a = dmatrix![1.0, -2.0; 0.5, 3.0];
        let aa = a.clone();
        let f = ScalarFn::new(2, 2, move |p| (p[0].transpose() * &aa * p[1])[(0, 0)]);
        let (x, y) = (dvector![0.2, -0.7], dvector![1.3, 0.4]);
        let h = fd_mixed_second(&f, 0, 1, &[&x, &y], &settings()).unwrap();
        assert!((h - &a).amax() <= 1e-6 * a.amax());
    }

    #[test]
    fn mixed_of_separable_is_zero() {
        let f = ScalarFn::new(2, 2, |p| 0.5 * p[0].norm_squared());
        let (x, y) = (dvector![0.2, -0.7], dvector![1.3, 0.4]);
        let h = fd_mixed_second(&f, 0, 1, &[&x, &y], &settings()).unwrap();
        assert!(h.amax() <= 1e-8);
    }

    #[test]
    fn inner_product_first_third_is_identity() {
        let f = ScalarFn::new(3, 2, |p| p[0].dot(p[2]));
        let (x, y, z) = (dvector![0.2, -0.7], dvector![1.3, 0.4], dvector![-0.5, 0.9]);
        let h = fd_mixed_second(&f, 0, 2, &[&x, &y, &z], &settings()).unwrap();
        assert!((h - DMatrix::identity(2, 2)).amax() <= 1e-8);
    }

    #[test]
    fn checker_accepts_exact_and_flags_perturbed_gradient() {
        let f = ScalarFn::new(2, 2, |p| (p[0][0] * p[1][1]).sin() + p[0][1].powi(3));
        let exact = |p: &[&Coords]| {
            dvector![p[1][1] * (p[0][0] * p[1][1]).cos(), 3.0 * p[0][1].powi(2)]
        };
        let samples = vec![
            vec![dvector![0.3, -0.4], dvector![0.1, 0.9]],
            vec![dvector![-1.2, 0.5], dvector![0.7, -0.3]],
        ];
        let err = check_derivatives(exact, &f, 0, &samples, &settings()).unwrap();
        assert!(err <= 1e-6, "{err}");
        let perturbed = |p: &[&Coords]| exact(p) + dvector![1.0, 0.0];
        let err = check_derivatives(perturbed, &f, 0, &samples, &settings()).unwrap();
        assert!(err >= 0.5, "{err}");
        let none: Vec<Vec<Coords>> = Vec::new();
        assert!(matches!(
            check_derivatives(exact, &f, 0, &none, &settings()),
            Err(VakonError::Precondition(_))
        ));
    }

    #[test]
    fn non_finite_evaluation_is_a_domain_error() {
        let f = ScalarFn::new(1, 1, |p| p[0][0].ln());
        let x = dvector![0.0];
        assert!(matches!(
            fd_partial(&f, 0, &[&x], &settings()),
            Err(VakonError::NumericDomain { .. })
        ));
    }

    #[test]
    fn shape_errors_are_contract_errors() {
        let f = ScalarFn::new(2, 2, |_| 0.0);
        let x = dvector![0.0, 1.0];
        assert!(matches!(fd_partial(&f, 0, &[&x], &settings()), Err(VakonError::Contract(_))));
        assert!(matches!(
            fd_partial(&f, 2, &[&x, &x], &settings()),
            Err(VakonError::Contract(_))
        ));
    }

    proptest! {
        #[test]
        fn affine_functions_are_differentiated_exactly(
            c in prop::collection::vec(-1.0f64..1.0, 3),
            d in -1.0f64..1.0,
            x in prop::collection::vec(-1.0f64..1.0, 3),
            y in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let cv = Coords::from_vec(c);
            let cc = cv.clone();
            let f = ScalarFn::new(2, 3, move |p| cc.dot(p[1]) + d);
            let (xv, yv) = (Coords::from_vec(x), Coords::from_vec(y));
            let g = fd_partial(&f, 1, &[&xv, &yv], &settings()).unwrap();
            prop_assert!((g - cv).amax() <= 1e-12);
        }

        #[test]
        fn mixed_second_is_transpose_symmetric(
            x in prop::collection::vec(-1.0f64..1.0, 2),
            y in prop::collection::vec(-1.0f64..1.0, 2),
        ) {
            let f = ScalarFn::new(2, 2, |p| (p[0][0] * p[1][1]).sin() + p[0][1] * p[1][0].exp());
            let (xv, yv) = (Coords::from_vec(x), Coords::from_vec(y));
            let a = fd_mixed_second(&f, 0, 1, &[&xv, &yv], &settings()).unwrap();
            let b = fd_mixed_second(&f, 1, 0, &[&xv, &yv], &settings()).unwrap();
            prop_assert!((&a - b.transpose()).amax() <= 1e-5 * (1.0 + a.amax()));
        }
    }
}
