//! Dense LU helpers and the damped Newton driver shared by every solver.

use nalgebra::DMatrix;

use crate::error::{Result, VakonError};
use crate::types::{Coords, SolverSettings};

/// Conditioning summary of a square matrix after row/column equilibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularity {
    /// Determinant of the raw matrix.
    pub det: f64,
    /// Determinant of the equilibrated matrix (every row and column scaled
    /// to unit max-norm).
    pub relative_det: f64,
    /// `min |U_ii| / max |U_ii|` of the equilibrated LU factors.
    pub pivot_ratio: f64,
    /// Position of the smallest pivot.
    pub pivot: usize,
}

impl Regularity {
    pub fn is_singular(&self, tol: f64) -> bool {
        !(self.pivot_ratio >= tol)
    }
}

fn equilibrate(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut b = a.clone();
    for mut row in b.row_iter_mut() {
        let s = row.amax();
        if s == 0.0 {
            return None;
        }
        row /= s;
    }
    for mut col in b.column_iter_mut() {
        let s = col.amax();
        if s == 0.0 {
            return None;
        }
        col /= s;
    }
    Some(b)
}

pub fn regularity(a: &DMatrix<f64>) -> Regularity {
    assert!(a.is_square(), "regularity needs a square matrix");
    if a.nrows() == 0 {
        return Regularity {
            det: 1.0,
            relative_det: 1.0,
            pivot_ratio: 1.0,
            pivot: 0,
        };
    }
    let det = a.clone().lu().determinant();
    let Some(b) = equilibrate(a) else {
        return Regularity {
            det,
            relative_det: 0.0,
            pivot_ratio: 0.0,
            pivot: 0,
        };
    };
    let lu = b.lu();
    let relative_det = lu.determinant();
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let (pivot, min) = diag
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let pivot_ratio = if max > 0.0 && min.is_finite() { min / max } else { 0.0 };
    Regularity {
        det,
        relative_det,
        pivot_ratio,
        pivot,
    }
}

/// Solves `a x = b`, failing with `SingularKkt` when the equilibrated pivot
/// ratio drops below `singular_tol`.
pub fn solve_checked(a: &DMatrix<f64>, b: &Coords, singular_tol: f64) -> Result<Coords> {
    let reg = regularity(a);
    if reg.is_singular(singular_tol) {
        return Err(VakonError::SingularKkt {
            pivot: reg.pivot,
            pivot_ratio: reg.pivot_ratio,
        });
    }
    a.clone().lu().solve(b).ok_or(VakonError::SingularKkt {
        pivot: reg.pivot,
        pivot_ratio: reg.pivot_ratio,
    })
}

pub fn inf_norm(v: &Coords) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Result of a converged Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub z: Coords,
    pub iterations: usize,
    pub residual: f64,
    /// True when the solve stopped at the floating-point granularity floor
    /// `|r_i| <= 8 eps (|J| |z|)_i` instead of at `newton_tol`.
    pub floor_limited: bool,
}

fn within_floor(r: &Coords, jac: &DMatrix<f64>, z: &Coords) -> bool {
    let scale = jac.abs() * z.abs();
    r.iter()
        .zip(scale.iter())
        .all(|(ri, si)| ri.abs() <= 8.0 * f64::EPSILON * si)
}

/// Damped Newton: full step, halved while the residual norm does not
/// decrease, up to `backtrack_max` halvings.
pub fn damped_newton<R, J>(
    z0: Coords,
    mut residual: R,
    mut jacobian: J,
    settings: &SolverSettings,
) -> Result<NewtonOutcome>
where
    R: FnMut(&Coords) -> Result<Coords>,
    J: FnMut(&Coords) -> Result<DMatrix<f64>>,
{
    let mut z = z0;
    let mut r = residual(&z)?;
    let mut norm = inf_norm(&r);
    for iter in 0..=settings.max_iter {
        if norm <= settings.newton_tol {
            return Ok(NewtonOutcome {
                z,
                iterations: iter,
                residual: norm,
                floor_limited: false,
            });
        }
        if !norm.is_finite() {
            return Err(VakonError::NumericDomain {
                coords: z.iter().cloned().collect(),
            });
        }
        let jac = jacobian(&z)?;
        if within_floor(&r, &jac, &z) {
            return Ok(NewtonOutcome {
                z,
                iterations: iter,
                residual: norm,
                floor_limited: true,
            });
        }
        if iter == settings.max_iter {
            break;
        }
        let delta = solve_checked(&jac, &(-&r), settings.singular_tol)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.backtrack_max {
            let trial = &z + &delta * t;
            match residual(&trial) {
                Ok(rt) => {
                    let nt = inf_norm(&rt);
                    if nt < norm {
                        accepted = Some((trial, rt, nt));
                        break;
                    }
                }
                // A trial point the residual cannot be evaluated at (non-finite
                // values, an inner solve that fails) is treated like an uphill step.
                Err(VakonError::Contract(msg)) => return Err(VakonError::Contract(msg)),
                Err(_) => {}
            }
            t *= 0.5;
        }
        match accepted {
            Some((zt, rt, nt)) => {
                z = zt;
                r = rt;
                norm = nt;
            }
            None => {
                return Err(VakonError::NoConvergence {
                    iterations: iter + 1,
                    residual: norm,
                })
            }
        }
    }
    Err(VakonError::NoConvergence {
        iterations: settings.max_iter,
        residual: norm,
    })
}

/// Minimum-norm Gauss-Newton projection onto `{z : c(z) = 0}` for an
/// underdetermined constraint map (`rows <= z.len()`).
pub fn project_min_norm<C, J>(
    z0: Coords,
    mut constraint: C,
    mut jacobian: J,
    settings: &SolverSettings,
) -> Result<Coords>
where
    C: FnMut(&Coords) -> Result<Coords>,
    J: FnMut(&Coords) -> Result<DMatrix<f64>>,
{
    let mut z = z0;
    let mut norm = f64::INFINITY;
    for _ in 0..settings.max_iter {
        let c = constraint(&z)?;
        norm = inf_norm(&c);
        if norm <= settings.newton_tol {
            return Ok(z);
        }
        let jac = jacobian(&z)?;
        let gram = &jac * jac.transpose();
        let y = solve_checked(&gram, &c, settings.singular_tol)?;
        z -= jac.transpose() * y;
    }
    let c = constraint(&z)?;
    if inf_norm(&c) <= settings.newton_tol {
        return Ok(z);
    }
    Err(VakonError::NoConvergence {
        iterations: settings.max_iter,
        residual: norm,
    })
}

/// Central-difference Jacobian of a vector map, one column per unknown.
pub fn fd_jacobian_of<F>(z: &Coords, rows: usize, step: f64, mut f: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&Coords) -> Result<Coords>,
{
    let mut jac = DMatrix::zeros(rows, z.len());
    for j in 0..z.len() {
        let d = step * (1.0 + z[j].abs());
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += d;
        zm[j] -= d;
        let dx = zp[j] - zm[j];
        let col = (f(&zp)? - f(&zm)?) / dx;
        jac.set_column(j, &col);
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn regularity_of_identity() {
        let reg = regularity(&DMatrix::identity(3, 3));
        assert_eq!(reg.det, 1.0);
        assert_eq!(reg.pivot_ratio, 1.0);
    }

    #[test]
    fn zero_row_is_singular() {
        let a = dmatrix![1.0, 2.0; 0.0, 0.0];
        let reg = regularity(&a);
        assert!(reg.is_singular(1e-12));
        assert_eq!(reg.relative_det, 0.0);
    }

    #[test]
    fn badly_scaled_but_regular_matrix_passes() {
        let a = dmatrix![1e8, 1.0; 1.0, 1e-6];
        let reg = regularity(&a);
        assert!(!reg.is_singular(1e-12));
    }

    #[test]
    fn newton_solves_scalar_quadratic() {
        let out = damped_newton(
            Coords::from_element(1, 3.0),
            |z| Ok(Coords::from_element(1, z[0] * z[0] - 2.0)),
            |z| Ok(DMatrix::from_element(1, 1, 2.0 * z[0])),
            &SolverSettings::default(),
        )
        .unwrap();
        assert!((out.z[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn newton_reports_singular_jacobian() {
        let err = damped_newton(
            Coords::from_element(1, 0.0),
            |_| Ok(Coords::from_element(1, 1.0)),
            |_| Ok(DMatrix::zeros(1, 1)),
            &SolverSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, VakonError::SingularKkt { .. }));
    }

    #[test]
    fn newton_gives_up_without_descent() {
        // Residual z^2 + 1 has no root; the backtracking loop cannot descend past z=0.
        let err = damped_newton(
            Coords::from_element(1, 0.5),
            |z| Ok(Coords::from_element(1, z[0] * z[0] + 1.0)),
            |z| Ok(DMatrix::from_element(1, 1, 2.0 * z[0])),
            &SolverSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            VakonError::NoConvergence { .. } | VakonError::SingularKkt { .. }
        ));
    }
}
