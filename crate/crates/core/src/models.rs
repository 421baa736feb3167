//! Small closed-form models used as exact test problems.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::numdiff::{check_shape, SlottedScalarFn};
use crate::types::{Coords, SolverSettings};

/// Discrete kinetic energy `L_d(a, b) = (mass / 2) |b - a|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeParticle {
    pub dim: usize,
    pub mass: f64,
}

impl FreeParticle {
    pub fn new(dim: usize) -> Self {
        Self { dim, mass: 1.0 }
    }
}

impl SlottedScalarFn for FreeParticle {
    fn arity(&self) -> usize {
        2
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, pts: &[&Coords]) -> f64 {
        0.5 * self.mass * (pts[1] - pts[0]).norm_squared()
    }
    fn partial(&self, slot: usize, pts: &[&Coords], _s: &SolverSettings) -> Result<Coords> {
        check_shape(2, self.dim, pts)?;
        let d = (pts[1] - pts[0]) * self.mass;
        Ok(if slot == 0 { -d } else { d })
    }
    fn mixed(&self, i: usize, j: usize, pts: &[&Coords], _s: &SolverSettings) -> Result<DMatrix<f64>> {
        check_shape(2, self.dim, pts)?;
        let sign = if i == j { 1.0 } else { -1.0 };
        Ok(DMatrix::identity(self.dim, self.dim) * (sign * self.mass))
    }
}

/// Second-difference energy `L~_d(x, y, z) = 1/2 |z - 2y + x|^2`.
///
/// Its discrete Euler-Lagrange stencil is the fourth difference, so every
/// cubic sequence is an exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondDifference {
    pub dim: usize,
}

const STENCIL: [f64; 3] = [1.0, -2.0, 1.0];

impl SlottedScalarFn for SecondDifference {
    fn arity(&self) -> usize {
        3
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, pts: &[&Coords]) -> f64 {
        0.5 * (pts[2] - pts[1] * 2.0 + pts[0]).norm_squared()
    }
    fn partial(&self, slot: usize, pts: &[&Coords], _s: &SolverSettings) -> Result<Coords> {
        check_shape(3, self.dim, pts)?;
        Ok((pts[2] - pts[1] * 2.0 + pts[0]) * STENCIL[slot])
    }
    fn mixed(&self, i: usize, j: usize, pts: &[&Coords], _s: &SolverSettings) -> Result<DMatrix<f64>> {
        check_shape(3, self.dim, pts)?;
        Ok(DMatrix::identity(self.dim, self.dim) * (STENCIL[i] * STENCIL[j]))
    }
}

/// `q_k = a + b k + c k^2 + d k^3`, evaluated component-wise.
pub fn cubic_sequence(coeffs: [&Coords; 4], len: usize) -> Vec<Coords> {
    (0..len)
        .map(|k| {
            let t = k as f64;
            coeffs[0] + coeffs[1] * t + coeffs[2] * (t * t) + coeffs[3] * (t * t * t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff::{fd_mixed_second, fd_partial};
    use nalgebra::dvector;

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let s = SolverSettings::default();
        let (a, b, c) = (dvector![0.3, -0.1], dvector![1.2, 0.4], dvector![-0.6, 2.0]);
        let fp = FreeParticle { dim: 2, mass: 1.7 };
        for slot in 0..2 {
            let g = fp.partial(slot, &[&a, &b], &s).unwrap();
            assert!((g - fd_partial(&fp, slot, &[&a, &b], &s).unwrap()).amax() < 1e-9);
            for j in 0..2 {
                let h = fp.mixed(slot, j, &[&a, &b], &s).unwrap();
                assert!((h - fd_mixed_second(&fp, slot, j, &[&a, &b], &s).unwrap()).amax() < 1e-6);
            }
        }
        let sd = SecondDifference { dim: 2 };
        for slot in 0..3 {
            let g = sd.partial(slot, &[&a, &b, &c], &s).unwrap();
            assert!((g - fd_partial(&sd, slot, &[&a, &b, &c], &s).unwrap()).amax() < 1e-9);
        }
        let d13 = sd.mixed(0, 2, &[&a, &b, &c], &s).unwrap();
        assert_eq!(d13, DMatrix::identity(2, 2));
    }
}
