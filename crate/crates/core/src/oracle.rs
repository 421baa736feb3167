//! Direct transcription: Newton on the extremality conditions of the whole
//! trajectory at once, with `q_0, q_1, q_{N-1}, q_N` fixed.
//!
//! This is independent of the sequential flow and serves as its reference.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VakonError};
use crate::linalg::{damped_newton, inf_norm, project_min_norm};
use crate::reduce::{total_cost, ControlledDiscreteSystem};
use crate::second_order::{residual2, SecondOrderProblem};
use crate::types::{ConfigPoint, Coords, DiscretePath, MultiplierSeq, SolverSettings};

/// Stacked unknowns: `q_2 ... q_{N-2}`, then `lambda^0 ... lambda^{N-2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVars {
    pub stacked: Coords,
}

impl GlobalVars {
    pub fn len_for(n_last: usize, n: usize, m: usize) -> usize {
        (n_last - 3) * n + (n_last - 1) * m
    }

    pub fn from_parts(points: &[Coords], lams: &[Coords]) -> Self {
        let total: usize = points.iter().map(|p| p.len()).sum::<usize>() + lams.iter().map(|l| l.len()).sum::<usize>();
        let stacked = Coords::from_iterator(
            total,
            points.iter().chain(lams.iter()).flat_map(|v| v.iter().cloned()),
        );
        Self { stacked }
    }
}

/// Boundary data `(q_0, q_1, q_{N-1}, q_N)`.
pub type Boundary<'a> = [&'a ConfigPoint; 4];

struct Layout {
    n_last: usize,
    n: usize,
    m: usize,
}

impl Layout {
    fn new(p: &SecondOrderProblem, n_last: usize) -> Result<Self> {
        if n_last < 4 {
            return Err(VakonError::Precondition(format!(
                "direct transcription needs N >= 4, got {n_last}"
            )));
        }
        Ok(Self { n_last, n: p.n(), m: p.m() })
    }

    fn len(&self) -> usize {
        GlobalVars::len_for(self.n_last, self.n, self.m)
    }

    fn lam_offset(&self) -> usize {
        (self.n_last - 3) * self.n
    }

    fn path(&self, boundary: Boundary, z: &Coords) -> Vec<Coords> {
        let mut pts = Vec::with_capacity(self.n_last + 1);
        pts.push(boundary[0].coords().clone());
        pts.push(boundary[1].coords().clone());
        for j in 0..self.n_last - 3 {
            pts.push(z.rows(j * self.n, self.n).into_owned());
        }
        pts.push(boundary[2].coords().clone());
        pts.push(boundary[3].coords().clone());
        pts
    }

    fn lams(&self, z: &Coords) -> Vec<Coords> {
        let off = self.lam_offset();
        (0..self.n_last - 1)
            .map(|k| z.rows(off + k * self.m, self.m).into_owned())
            .collect()
    }
}

/// Stationarity rows for `k = 2 ... N-2` followed by constraint rows for
/// `k = 0 ... N-2`.
pub fn global_residual(
    p: &SecondOrderProblem,
    boundary: Boundary,
    vars: &GlobalVars,
    n_last: usize,
    settings: &SolverSettings,
) -> Result<Coords> {
    let lay = Layout::new(p, n_last)?;
    if vars.stacked.len() != lay.len() {
        return Err(VakonError::Contract(format!(
            "expected {} stacked unknowns, got {}",
            lay.len(),
            vars.stacked.len()
        )));
    }
    let bq: Vec<&Coords> = boundary.iter().map(|q| q.coords()).collect();
    p.check(&bq, &[])?;
    residual_of(p, &lay, boundary, &vars.stacked, settings)
}

fn residual_of(
    p: &SecondOrderProblem,
    lay: &Layout,
    boundary: Boundary,
    z: &Coords,
    settings: &SolverSettings,
) -> Result<Coords> {
    let pts = lay.path(boundary, z);
    let lams = lay.lams(z);
    let (n, m, n_last) = (lay.n, lay.m, lay.n_last);
    let mut r = Coords::zeros(lay.len());
    for k in 2..=n_last - 2 {
        let full = residual2(
            p,
            [&pts[k - 2], &pts[k - 1], &pts[k], &pts[k + 1], &pts[k + 2]],
            [&lams[k - 2], &lams[k - 1], &lams[k]],
            settings,
        )?;
        r.rows_mut((k - 2) * n, n).copy_from(&full.rows(0, n));
    }
    let off = lay.lam_offset();
    for k in 0..=n_last - 2 {
        r.rows_mut(off + k * m, m)
            .copy_from(&p.constraint(&pts[k], &pts[k + 1], &pts[k + 2]));
    }
    Ok(r)
}

/// Central-difference Jacobian using column groups that share no rows:
/// a point `q_j` touches nodes `j-2 ..= j+2`, a multiplier `lambda^j`
/// touches nodes `j ..= j+2`.
fn banded_jacobian(
    p: &SecondOrderProblem,
    lay: &Layout,
    boundary: Boundary,
    z: &Coords,
    settings: &SolverSettings,
) -> Result<DMatrix<f64>> {
    let size = lay.len();
    let (n, m) = (lay.n, lay.m);
    let off = lay.lam_offset();
    let mut jac = DMatrix::zeros(size, size);
    let step = f64::EPSILON.cbrt();
    // Node index of each stacked row; points start at node 2.
    let row_node = |row: usize| if row < off { row / n + 2 } else { (row - off) / m };
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new(); // (column, node of the unknown)
    for color in 0..5 {
        for r in 0..n {
            let cols: Vec<(usize, usize)> = (0..lay.n_last - 3)
                .filter(|j| (j + 2) % 5 == color)
                .map(|j| (j * n + r, j + 2))
                .collect();
            if !cols.is_empty() {
                groups.push(cols);
            }
        }
    }
    for color in 0..3 {
        for a in 0..m {
            let cols: Vec<(usize, usize)> = (0..lay.n_last - 1)
                .filter(|j| j % 3 == color)
                .map(|j| (off + j * m + a, j))
                .collect();
            if !cols.is_empty() {
                groups.push(cols);
            }
        }
    }
    for group in groups {
        let mut zp = z.clone();
        let mut zm = z.clone();
        let mut widths = Vec::with_capacity(group.len());
        for &(c, _) in &group {
            let d = step * (1.0 + z[c].abs());
            zp[c] += d;
            zm[c] -= d;
            widths.push(zp[c] - zm[c]);
        }
        let diff = residual_of(p, lay, boundary, &zp, settings)? - residual_of(p, lay, boundary, &zm, settings)?;
        for (&(c, node), w) in group.iter().zip(widths) {
            let is_point = c < off;
            for row in 0..size {
                let rn = row_node(row);
                let touches = if row < off {
                    if is_point { rn + 2 >= node && rn <= node + 2 } else { rn >= node && rn <= node + 2 }
                } else {
                    is_point && rn + 2 >= node && rn <= node
                };
                if touches {
                    jac[(row, c)] = diff[row] / w;
                }
            }
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    /// Stopped at the floating-point granularity floor rather than at `newton_tol`.
    pub floor_limited: bool,
}

/// Interior points on the segment from `q_1` to `q_{N-1}`, zero multipliers.
pub fn default_guess(p: &SecondOrderProblem, boundary: Boundary, n_last: usize) -> GlobalVars {
    let (a, b) = (boundary[1].coords(), boundary[2].coords());
    let span = (n_last - 2) as f64;
    let points: Vec<Coords> = (2..=n_last - 2)
        .map(|k| a + (b - a) * ((k - 1) as f64 / span))
        .collect();
    let lams = vec![Coords::zeros(p.m()); n_last - 1];
    GlobalVars::from_parts(&points, &lams)
}

pub fn solve_direct(
    p: &SecondOrderProblem,
    boundary: Boundary,
    n_last: usize,
    guess: Option<&GlobalVars>,
    settings: &SolverSettings,
) -> Result<(DiscretePath, MultiplierSeq, SolveStats)> {
    let lay = Layout::new(p, n_last)?;
    let bq: Vec<&Coords> = boundary.iter().map(|q| q.coords()).collect();
    p.check(&bq, &[])?;
    let z0 = match guess {
        Some(g) if g.stacked.len() == lay.len() => g.stacked.clone(),
        Some(g) => {
            return Err(VakonError::Contract(format!(
                "guess has {} unknowns, expected {}",
                g.stacked.len(),
                lay.len()
            )))
        }
        None => default_guess(p, boundary, n_last).stacked,
    };
    let out = damped_newton(
        z0,
        |z| residual_of(p, &lay, boundary, z, settings),
        |z| banded_jacobian(p, &lay, boundary, z, settings),
        settings,
    )?;
    let points = lay
        .path(boundary, &out.z)
        .into_iter()
        .map(ConfigPoint::new)
        .collect::<Result<Vec<_>>>()?;
    Ok((
        DiscretePath::new(points, p.time_step)?,
        MultiplierSeq::new(lay.lams(&out.z))?,
        SolveStats {
            iterations: out.iterations,
            residual: out.residual,
            floor_limited: out.floor_limited,
        },
    ))
}

/// Continuation in the terminal pair: starts from the coasting extension of
/// `(q_0, q_1)` and moves the terminal pair to the requested one in
/// `stages` increments, warm-starting each solve. A failed increment is
/// halved up to eight times.
pub fn solve_homotopy(
    p: &SecondOrderProblem,
    boundary: Boundary,
    n_last: usize,
    stages: usize,
    settings: &SolverSettings,
) -> Result<(DiscretePath, MultiplierSeq, SolveStats)> {
    let _ = Layout::new(p, n_last)?;
    let (q0, q1) = (boundary[0].coords(), boundary[1].coords());
    let v = q1 - q0;
    let start = [q0 + &v * (n_last as f64 - 1.0), q0 + &v * n_last as f64];
    let target = [boundary[2].coords().clone(), boundary[3].coords().clone()];
    let at = |sigma: f64| -> Result<[ConfigPoint; 2]> {
        Ok([
            ConfigPoint::new(&start[0] + (&target[0] - &start[0]) * sigma)?,
            ConfigPoint::new(&start[1] + (&target[1] - &start[1]) * sigma)?,
        ])
    };
    let mut sigma = 0.0;
    let mut guess: Option<GlobalVars> = None;
    let mut increment = 1.0 / stages.max(1) as f64;
    let mut halvings = 0;
    loop {
        let next = if sigma + increment >= 1.0 - 1e-12 { 1.0 } else { sigma + increment };
        let [a, b] = at(next)?;
        match solve_direct(p, [boundary[0], boundary[1], &a, &b], n_last, guess.as_ref(), settings) {
            Ok((path, lams, stats)) => {
                if next == 1.0 {
                    return Ok((path, lams, stats));
                }
                let pts: Vec<Coords> = path.points()[2..=n_last - 2].iter().map(|q| q.coords().clone()).collect();
                guess = Some(GlobalVars::from_parts(&pts, lams.as_slice()));
                sigma = next;
                halvings = 0;
            }
            Err(e) => {
                halvings += 1;
                if halvings > 8 {
                    return Err(e);
                }
                increment *= 0.5;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub base_cost: f64,
    /// Cost of every projected perturbation.
    pub perturbed_costs: Vec<f64>,
    /// Largest constraint violation after projection.
    pub max_projection_residual: f64,
}

impl MinimalityReport {
    pub fn min_increase(&self) -> f64 {
        self.perturbed_costs
            .iter()
            .map(|c| c - self.base_cost)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Perturbs the interior points of a converged solution at random, moves
/// them back onto the constraints by minimum-norm Gauss-Newton, and records
/// the cost of each feasible neighbour.
pub fn minimality_check(
    sys: &ControlledDiscreteSystem,
    p: &SecondOrderProblem,
    path: &DiscretePath,
    samples: usize,
    amplitude: f64,
    seed: u64,
    settings: &SolverSettings,
) -> Result<MinimalityReport> {
    let n_last = path.len() - 1;
    let lay = Layout::new(p, n_last)?;
    let n = lay.n;
    let boundary = [path.point(0), path.point(1), path.point(n_last - 1), path.point(n_last)];
    let interior: Vec<Coords> = path.points()[2..=n_last - 2].iter().map(|q| q.coords().clone()).collect();
    let z_base = GlobalVars::from_parts(&interior, &[]).stacked;
    let dz = z_base.len();
    let assemble = |z: &Coords| -> Vec<Coords> {
        let mut out = vec![boundary[0].coords().clone(), boundary[1].coords().clone()];
        out.extend((0..n_last - 3).map(|j| z.rows(j * n, n).into_owned()));
        out.push(boundary[2].coords().clone());
        out.push(boundary[3].coords().clone());
        out
    };
    let constraints = |z: &Coords| -> Result<Coords> {
        let pts = assemble(z);
        let m = lay.m;
        let mut c = Coords::zeros((n_last - 1) * m);
        for k in 0..=n_last - 2 {
            c.rows_mut(k * m, m).copy_from(&p.constraint(&pts[k], &pts[k + 1], &pts[k + 2]));
        }
        Ok(c)
    };
    let rows = (n_last - 1) * lay.m;
    let base_cost = total_cost(sys, path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturbed_costs = Vec::with_capacity(samples);
    let mut max_res: f64 = 0.0;
    for _ in 0..samples {
        let noise = Coords::from_fn(dz, |_, _| rng.gen_range(-1.0..1.0) * amplitude);
        let z = project_min_norm(
            &z_base + noise,
            constraints,
            |z| crate::linalg::fd_jacobian_of(z, rows, f64::EPSILON.cbrt(), constraints),
            settings,
        )?;
        max_res = max_res.max(inf_norm(&constraints(&z)?));
        let pts = assemble(&z).into_iter().map(ConfigPoint::new).collect::<Result<Vec<_>>>()?;
        perturbed_costs.push(total_cost(sys, &DiscretePath::new(pts, path.h())?)?);
    }
    Ok(MinimalityReport {
        base_cost,
        perturbed_costs,
        max_projection_residual: max_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{cubic_sequence, SecondDifference};
    use crate::numdiff::{NoConstraints, VectorFn};
    use crate::second_order::{flow2, project_seed};
    use nalgebra::dvector;
    use std::sync::Arc;

    fn toy() -> SecondOrderProblem {
        SecondOrderProblem::new(
            Arc::new(SecondDifference { dim: 2 }),
            Arc::new(NoConstraints { arity: 3, dim: 2 }),
            0.1,
        )
        .unwrap()
    }

    fn constrained() -> SecondOrderProblem {
        let c = VectorFn::new(3, 2, 1, |p| {
            dvector![p[2][1] - 2.0 * p[1][1] + p[0][1] - 0.01 * (p[2][0] - p[0][0]) + 0.02 * p[1][0].sin()]
        });
        SecondOrderProblem::new(Arc::new(SecondDifference { dim: 2 }), Arc::new(c), 0.1).unwrap()
    }

    fn cubic(n_last: usize) -> Vec<ConfigPoint> {
        let c = [dvector![0.1, -0.2], dvector![0.5, 0.3], dvector![-0.2, 0.1], dvector![0.02, -0.01]];
        cubic_sequence([&c[0], &c[1], &c[2], &c[3]], n_last + 1)
            .into_iter()
            .map(|v| ConfigPoint::new(v).unwrap())
            .collect()
    }

    fn s() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn cubic_has_zero_global_residual_and_is_recovered() {
        let p = toy();
        let n_last = 12;
        let q = cubic(n_last);
        let b = [&q[0], &q[1], &q[n_last - 1], &q[n_last]];
        let interior: Vec<Coords> = q[2..=n_last - 2].iter().map(|v| v.coords().clone()).collect();
        let vars = GlobalVars::from_parts(&interior, &vec![Coords::zeros(0); n_last - 1]);
        let r = global_residual(&p, b, &vars, n_last, &s()).unwrap();
        assert!(r.amax() <= 1e-10);
        let (path, _, stats) = solve_direct(&p, b, n_last, None, &s()).unwrap();
        assert!(stats.residual <= 1e-10);
        for (a, e) in path.points().iter().zip(&q) {
            assert!((a.coords() - e.coords()).amax() <= 1e-10);
        }
    }

    #[test]
    fn too_short_horizon_is_rejected() {
        let p = toy();
        let q = cubic(3);
        assert!(matches!(
            solve_direct(&p, [&q[0], &q[1], &q[2], &q[3]], 3, None, &s()),
            Err(VakonError::Precondition(_))
        ));
    }

    #[test]
    fn constraint_rows_pass_through_with_zero_multipliers() {
        let p = constrained();
        let n_last = 6;
        let q: Vec<ConfigPoint> = (0..=n_last)
            .map(|k| ConfigPoint::from_slice(&[0.1 * k as f64, (0.3 * k as f64).sin()]).unwrap())
            .collect();
        let interior: Vec<Coords> = q[2..=n_last - 2].iter().map(|v| v.coords().clone()).collect();
        let vars = GlobalVars::from_parts(&interior, &vec![dvector![0.0]; n_last - 1]);
        let r = global_residual(&p, [&q[0], &q[1], &q[n_last - 1], &q[n_last]], &vars, n_last, &s()).unwrap();
        let off = (n_last - 3) * 2;
        for k in 0..=n_last - 2 {
            assert_eq!(r[off + k], p.constraint(&q[k], &q[k + 1], &q[k + 2])[0]);
        }
    }

    #[test]
    fn banded_jacobian_matches_dense_differences() {
        let p = constrained();
        let n_last = 11;
        let lay = Layout::new(&p, n_last).unwrap();
        let q: Vec<ConfigPoint> = (0..=n_last)
            .map(|k| ConfigPoint::from_slice(&[0.1 * k as f64, (0.3 * k as f64).sin()]).unwrap())
            .collect();
        let b = [&q[0], &q[1], &q[n_last - 1], &q[n_last]];
        let z = Coords::from_fn(lay.len(), |i, _| (i as f64 * 0.37).sin());
        let banded = banded_jacobian(&p, &lay, b, &z, &s()).unwrap();
        let dense = crate::linalg::fd_jacobian_of(&z, lay.len(), f64::EPSILON.cbrt(), |v| {
            residual_of(&p, &lay, b, v, &s())
        })
        .unwrap();
        assert!((banded - dense).amax() <= 1e-7);
    }

    #[test]
    fn oracle_and_flow_agree_on_a_constrained_problem() {
        let p = constrained();
        let n_last = 14;
        let raw: Vec<ConfigPoint> = (0..=n_last)
            .map(|k| ConfigPoint::from_slice(&[0.05 * k as f64, 0.01 * k as f64]).unwrap())
            .collect();
        let seed = project_seed(&p, [&raw[0], &raw[1], &raw[2], &raw[3]], &s()).unwrap();
        let l = dvector![0.05];
        let (reference, _) = flow2(&p, [&seed[0], &seed[1], &seed[2], &seed[3]], [&l, &l], n_last, &s()).unwrap();
        let b = [reference.point(0), reference.point(1), reference.point(n_last - 1), reference.point(n_last)];
        let (path, lams, _) = solve_direct(&p, b, n_last, None, &s()).unwrap();
        for (a, e) in path.points().iter().zip(reference.points()) {
            assert!((a.coords() - e.coords()).amax() <= 1e-8);
        }
        let (again, _) = flow2(
            &p,
            [path.point(0), path.point(1), path.point(2), path.point(3)],
            [lams.get(0), lams.get(1)],
            n_last,
            &s(),
        )
        .unwrap();
        for (a, e) in again.points().iter().zip(path.points()) {
            assert!((a.coords() - e.coords()).amax() <= 1e-8);
        }
        let (hom, _, _) = solve_homotopy(&p, b, n_last, 3, &s()).unwrap();
        for (a, e) in hom.points().iter().zip(path.points()) {
            assert!((a.coords() - e.coords()).amax() <= 1e-8);
        }
    }
}
