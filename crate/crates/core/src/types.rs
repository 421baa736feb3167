//! Shared domain types: configuration points, index splits, paths and
//! multiplier sequences, solver settings.
//!
//! Angle coordinates are stored unwrapped on the real line so that every
//! model function stays smooth in its arguments.

use std::ops::Deref;

use nalgebra::DVector;

use crate::error::{Result, VakonError};

/// Dense real vector used for coordinates, gradients and multipliers.
pub type Coords = DVector<f64>;

/// A point of the configuration space, `q = (q^1, ..., q^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigPoint(Coords);

impl ConfigPoint {
    /// Builds a point, rejecting non-finite entries.
    pub fn new(coords: Coords) -> Result<Self> {
        if let Some(bad) = coords.iter().position(|v| !v.is_finite()) {
            return Err(VakonError::Contract(format!(
                "configuration coordinate {bad} is not finite"
            )));
        }
        Ok(Self(coords))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(Coords::from_column_slice(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &Coords {
        &self.0
    }

    pub fn into_coords(self) -> Coords {
        self.0
    }
}

impl Deref for ConfigPoint {
    type Target = Coords;

    fn deref(&self) -> &Coords {
        &self.0
    }
}

/// Partition of the coordinate indices into actuated (`a`) and
/// unactuated (`alpha`) sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofSplit {
    pub n: usize,
    pub actuated: Vec<usize>,
    pub unactuated: Vec<usize>,
}

impl DofSplit {
    pub fn new(n: usize, actuated: Vec<usize>, unactuated: Vec<usize>) -> Self {
        Self {
            n,
            actuated,
            unactuated,
        }
    }
}

/// Outcome of [`validate_split`]; lists every violated invariant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub violations: Vec<String>,
}

impl SplitReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_split(split: &DofSplit) -> SplitReport {
    let mut violations = Vec::new();
    for (name, list) in [("actuated", &split.actuated), ("unactuated", &split.unactuated)] {
        if list.is_empty() {
            violations.push(format!("{name} index list is empty"));
        }
        if list.windows(2).any(|w| w[0] >= w[1]) {
            violations.push(format!("{name} index list is not strictly sorted"));
        }
        for &i in list {
            if i >= split.n {
                violations.push(format!("{name} index {i} out of range for n={}", split.n));
            }
        }
    }
    for i in &split.actuated {
        if split.unactuated.contains(i) {
            violations.push(format!("index {i} is both actuated and unactuated"));
        }
    }
    for i in 0..split.n {
        if !split.actuated.contains(&i) && !split.unactuated.contains(&i) {
            violations.push(format!("index {i} is unassigned"));
        }
    }
    SplitReport { violations }
}

/// A discrete path `(q_0, ..., q_N)` sampled with a fixed time step.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    points: Vec<ConfigPoint>,
    h: f64,
}

impl DiscretePath {
    pub fn new(points: Vec<ConfigPoint>, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(VakonError::Contract(format!("time step must be positive, got {h}")));
        }
        if let Some(first) = points.first() {
            let n = first.dim();
            if let Some(k) = points.iter().position(|p| p.dim() != n) {
                return Err(VakonError::Contract(format!(
                    "point {k} has dimension {} but the path has dimension {n}",
                    points[k].dim()
                )));
            }
        }
        Ok(Self { points, h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dimension of the points, zero for an empty path.
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, ConfigPoint::dim)
    }

    pub fn points(&self) -> &[ConfigPoint] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &ConfigPoint {
        &self.points[k]
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn into_points(self) -> Vec<ConfigPoint> {
        self.points
    }
}

/// Returns `(q_k, ..., q_{k+width-1})` by value.
pub fn window(path: &DiscretePath, k: usize, width: usize) -> Result<Vec<ConfigPoint>> {
    let len = path.len();
    match k.checked_add(width) {
        Some(end) if end <= len => Ok(path.points[k..end].to_vec()),
        _ => Err(VakonError::Range { k, width, len }),
    }
}

/// Lagrange multiplier vectors `lambda^0, lambda^1, ...`, all of length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSeq {
    lams: Vec<Coords>,
}

impl MultiplierSeq {
    pub fn new(lams: Vec<Coords>) -> Result<Self> {
        if let Some(first) = lams.first() {
            let m = first.len();
            if let Some(k) = lams.iter().position(|l| l.len() != m) {
                return Err(VakonError::Contract(format!(
                    "multiplier {k} has length {} but the sequence has length {m}",
                    lams[k].len()
                )));
            }
        }
        Ok(Self { lams })
    }

    pub fn len(&self) -> usize {
        self.lams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lams.is_empty()
    }

    pub fn get(&self, k: usize) -> &Coords {
        &self.lams[k]
    }

    pub fn as_slice(&self) -> &[Coords] {
        &self.lams
    }

    pub fn into_vec(self) -> Vec<Coords> {
        self.lams
    }
}

/// Newton and finite-difference settings shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Infinity-norm residual tolerance.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Relative base step for first derivatives, scaled by `1 + |x|`. First
    /// derivatives are Richardson-extrapolated central differences at this
    /// step and its half.
    pub fd_step_first: f64,
    /// Relative step for second derivatives, scaled by `1 + |x|`.
    pub fd_step_second: f64,
    /// Smallest admissible pivot ratio of the equilibrated Newton matrix.
    pub singular_tol: f64,
    pub backtrack_max: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_iter: 50,
            fd_step_first: 1e-3,
            fd_step_second: f64::EPSILON.powf(0.25),
            singular_tol: 1e-12,
            backtrack_max: 30,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("newton_tol", self.newton_tol),
            ("fd_step_first", self.fd_step_first),
            ("fd_step_second", self.fd_step_second),
            ("singular_tol", self.singular_tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(VakonError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(VakonError::InvalidParams("max_iter must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_newton_tol(mut self, tol: f64) -> Self {
        self.newton_tol = tol;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cart_pole_split_is_valid() {
        assert!(validate_split(&DofSplit::new(2, vec![0], vec![1])).is_valid());
    }

    #[test]
    fn overlapping_split_is_rejected() {
        let report = validate_split(&DofSplit::new(2, vec![0], vec![0]));
        assert!(!report.is_valid());
        assert!(report.violations.iter().any(|v| v.contains("both")));
    }

    #[test]
    fn unassigned_index_is_reported() {
        let report = validate_split(&DofSplit::new(3, vec![0], vec![2]));
        assert!(report.violations.iter().any(|v| v.contains("index 1 is unassigned")));
    }

    fn path(n_points: usize) -> DiscretePath {
        let pts = (0..n_points)
            .map(|k| ConfigPoint::from_slice(&[k as f64, -(k as f64)]).unwrap())
            .collect();
        DiscretePath::new(pts, 0.1).unwrap()
    }

    #[test]
    fn window_examples() {
        let p = path(5);
        let w = window(&p, 0, 3).unwrap();
        assert_eq!(w[2], *p.point(2));
        let w = window(&p, 2, 3).unwrap();
        assert_eq!(w[0], *p.point(2));
        assert_eq!(w[2], *p.point(4));
        assert_eq!(
            window(&p, 3, 3),
            Err(VakonError::Range { k: 3, width: 3, len: 5 })
        );
    }

    #[test]
    fn path_rejects_bad_input() {
        let a = ConfigPoint::from_slice(&[0.0]).unwrap();
        let b = ConfigPoint::from_slice(&[0.0, 1.0]).unwrap();
        assert!(DiscretePath::new(vec![a.clone(), b], 0.1).is_err());
        assert!(DiscretePath::new(vec![a.clone()], 0.0).is_err());
        assert!(DiscretePath::new(vec![a], -1.0).is_err());
        assert!(ConfigPoint::from_slice(&[f64::NAN]).is_err());
    }

    #[test]
    fn multiplier_lengths_must_agree() {
        let bad = MultiplierSeq::new(vec![Coords::zeros(1), Coords::zeros(2)]);
        assert!(bad.is_err());
    }

    #[test]
    fn default_settings_are_valid() {
        SolverSettings::default().validate().unwrap();
        let bad = SolverSettings { max_iter: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn window_matches_indexing(len in 1usize..12, k in 0usize..12, width in 0usize..12) {
            let p = path(len);
            match window(&p, k, width) {
                Ok(w) => {
                    prop_assert!(k + width <= len);
                    for (i, q) in w.iter().enumerate() {
                        prop_assert_eq!(q, p.point(k + i));
                    }
                }
                Err(_) => prop_assert!(k + width > len),
            }
        }
    }
}
