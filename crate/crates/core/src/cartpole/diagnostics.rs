//! Energy and momentum diagnostics along discrete cart-pole trajectories.
//!
//! The discrete flow produces positions and multipliers only. The
//! continuous quantities of [`super::continuous::hamiltonian_w1`] are
//! rebuilt node by node: velocities by central differences, accelerations
//! by second differences, the force as `F_k = -u_k`, and
//!
//! ```text
//! p1_theta_k = m l cos(theta_k) F_k + s lambda^{k-1}
//! pi_k       = (M + m) F_k + s lambda^{k-1} cos(theta_k) / l
//! ```
//!
//! Matching the discrete action `sum (u_k^2 / 2 + lambda^k Phi_d)` against
//! `h * sum (u^2 / 2 + mu Phi)` gives the scale `s = -m l^2`. Because `pi`
//! must be affine in time, `s` can also be fitted from the data alone;
//! [`calibrate_scale`] does that and the two values are reported side by side.

use crate::cartpole::continuous::constraint_g;
use crate::cartpole::CartPoleParams;
use crate::error::{Result, VakonError};
use crate::reduce::ControlSeq;
use crate::types::{DiscretePath, MultiplierSeq};

/// Multiplier scale predicted by the action matching argument.
pub fn theoretical_scale(p: &CartPoleParams) -> f64 {
    -p.m * p.l * p.l
}

/// Which multiplier scale to use for the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierScale {
    Theoretical,
    Calibrated,
    Fixed(f64),
}

/// Reconstructed continuous quantities at one node; `None` where the
/// stencil does not fit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeEnergy {
    pub pi: Option<f64>,
    pub p1theta: Option<f64>,
    pub hamiltonian: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// One entry per path node.
    pub nodes: Vec<NodeEnergy>,
    /// Scale used for `nodes`.
    pub scale: f64,
    pub scale_theoretical: f64,
    pub scale_calibrated: f64,
}

impl EnergyReport {
    /// `(k, H_k)` for every node where `H` is defined.
    pub fn hamiltonian_series(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(k, n)| n.hamiltonian.map(|h| (k, h)))
            .collect()
    }

    pub fn pi_series(&self) -> Vec<(usize, f64)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(k, n)| n.pi.map(|v| (k, v)))
            .collect()
    }
}

fn check_alignment(path: &DiscretePath, lams: &MultiplierSeq, controls: &ControlSeq) -> Result<()> {
    let n = path.len();
    if n < 5 || controls.len() + 2 != n || lams.len() + 2 < n - 1 {
        return Err(VakonError::Precondition(format!(
            "energy reconstruction needs >= 5 nodes, N-1 controls and N-1 multipliers \
             (got {n} nodes, {} controls, {} multipliers)",
            controls.len(),
            lams.len()
        )));
    }
    if path.dim() != 2 || lams.as_slice().iter().any(|l| l.len() != 1) {
        return Err(VakonError::Contract("cart-pole paths have n=2, m=1".into()));
    }
    Ok(())
}

/// `(a_k, b_k)` with `pi_k = a_k + s b_k` for nodes `1 ..= N-1`.
fn pi_parts(
    p: &CartPoleParams,
    path: &DiscretePath,
    lams: &MultiplierSeq,
    controls: &ControlSeq,
) -> Vec<(f64, f64)> {
    (1..path.len() - 1)
        .map(|k| {
            let f = -controls.u[k - 1][0];
            let theta = path.point(k)[1];
            (p.total_mass() * f, lams.get(k - 1)[0] * theta.cos() / p.l)
        })
        .collect()
}

/// Least-squares line through `(t_i, y_i)`; returns the residuals.
pub fn linear_fit_residuals(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|ti| (ti - tm) * (ti - tm)).sum();
    let sty: f64 = t.iter().zip(y).map(|(ti, yi)| (ti - tm) * (yi - ym)).sum();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    t.iter()
        .zip(y)
        .map(|(ti, yi)| yi - (ym + slope * (ti - tm)))
        .collect()
}

/// Largest absolute residual of the least-squares line.
pub fn linear_fit_max_residual(t: &[f64], y: &[f64]) -> f64 {
    linear_fit_residuals(t, y).iter().fold(0.0, |a, r| a.max(r.abs()))
}

/// Slope of the least-squares line.
pub fn linear_fit_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|ti| (ti - tm) * (ti - tm)).sum();
    let sty: f64 = t.iter().zip(y).map(|(ti, yi)| (ti - tm) * (yi - ym)).sum();
    if stt > 0.0 {
        sty / stt
    } else {
        0.0
    }
}

/// The `s` that makes the reconstructed `pi` samples closest to a line.
///
/// Falls back to the theoretical value when the multipliers carry no
/// information (for instance at an equilibrium with zero multipliers).
pub fn calibrate_scale(
    p: &CartPoleParams,
    path: &DiscretePath,
    lams: &MultiplierSeq,
    controls: &ControlSeq,
) -> Result<f64> {
    check_alignment(path, lams, controls)?;
    let parts = pi_parts(p, path, lams, controls);
    let t: Vec<f64> = (1..path.len() - 1).map(|k| path.time(k)).collect();
    let a: Vec<f64> = parts.iter().map(|v| v.0).collect();
    let b: Vec<f64> = parts.iter().map(|v| v.1).collect();
    let ra = linear_fit_residuals(&t, &a);
    let rb = linear_fit_residuals(&t, &b);
    let bb: f64 = rb.iter().map(|v| v * v).sum();
    let ab: f64 = ra.iter().zip(&rb).map(|(x, y)| x * y).sum();
    let scale_b = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(bb > (1e-12 * scale_b).powi(2) * rb.len() as f64) {
        return Ok(theoretical_scale(p));
    }
    Ok(-ab / bb)
}

/// Node-wise reconstruction of `pi`, `p1_theta` and `H|W1`.
pub fn energy_series(
    p: &CartPoleParams,
    path: &DiscretePath,
    lams: &MultiplierSeq,
    controls: &ControlSeq,
    choice: MultiplierScale,
) -> Result<EnergyReport> {
    check_alignment(path, lams, controls)?;
    let theory = theoretical_scale(p);
    let calibrated = calibrate_scale(p, path, lams, controls)?;
    let s = match choice {
        MultiplierScale::Theoretical => theory,
        MultiplierScale::Calibrated => calibrated,
        MultiplierScale::Fixed(v) => v,
    };
    let n = path.len();
    let h = path.h();
    let mut nodes = vec![NodeEnergy::default(); n];
    let force = |k: usize| -controls.u[k - 1][0];
    for (k, node) in nodes.iter_mut().enumerate().take(n - 1).skip(1) {
        let theta = path.point(k)[1];
        let lam = lams.get(k - 1)[0];
        let f = force(k);
        node.pi = Some(p.total_mass() * f + s * lam * theta.cos() / p.l);
        node.p1theta = Some(p.m * p.l * theta.cos() * f + s * lam);
    }
    for k in 2..n - 2 {
        let (q0, q1, q2) = (path.point(k - 1), path.point(k), path.point(k + 1));
        let xdot = (q2[0] - q0[0]) / (2.0 * h);
        let thetadot = (q2[1] - q0[1]) / (2.0 * h);
        let xddot = (q2[0] - 2.0 * q1[0] + q0[0]) / (h * h);
        let theta = q1[1];
        let pi = nodes[k].pi.unwrap_or_default();
        let p1 = nodes[k].p1theta.unwrap_or_default();
        let pi_dot = (nodes[k + 1].pi.unwrap_or_default() - nodes[k - 1].pi.unwrap_or_default()) / (2.0 * h);
        let p1_dot =
            (nodes[k + 1].p1theta.unwrap_or_default() - nodes[k - 1].p1theta.unwrap_or_default()) / (2.0 * h);
        let f = force(k);
        let value = -pi_dot * xdot
            + (-2.0 * p.m * p.l * thetadot * theta.sin() * f - p1_dot) * thetadot
            + pi * xddot
            + p1 * constraint_g(p, theta, xddot)
            - 0.5 * f * f;
        nodes[k].hamiltonian = Some(value);
    }
    Ok(EnergyReport {
        nodes,
        scale: s,
        scale_theoretical: theory,
        scale_calibrated: calibrated,
    })
}

/// Band statistics of a scalar series sampled every `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    /// `max - min` over the first `early` samples.
    pub early_amplitude: f64,
    /// `max_k |H_k - H_0|`.
    pub max_deviation: f64,
    /// `|slope| * (span of t)` of the least-squares line.
    pub trend_excursion: f64,
}

pub fn band_stats(values: &[f64], h: f64, early: usize) -> Result<BandStats> {
    if values.len() < 2 || early < 2 {
        return Err(VakonError::Precondition("band statistics need at least two samples".into()));
    }
    let head = &values[..early.min(values.len())];
    let (lo, hi) = head
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let t: Vec<f64> = (0..values.len()).map(|i| i as f64 * h).collect();
    let slope = linear_fit_slope(&t, values);
    Ok(BandStats {
        early_amplitude: hi - lo,
        max_deviation: values.iter().fold(0.0, |m, v| m.max((v - values[0]).abs())),
        trend_excursion: slope.abs() * t[t.len() - 1],
    })
}
