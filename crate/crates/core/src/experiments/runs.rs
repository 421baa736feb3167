//! The runs behind each subcommand.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cartpole::continuous::{
    bracket_f, bracket_f_partials, constraint_g, constraint_g_partials, force_u, ltilde_m, ltilde_m_partials,
    regularity_r,
};
use crate::cartpole::diagnostics::{band_stats, energy_series, BandStats, EnergyReport};
use crate::cartpole::discrete::{discrete_system, printed_phi, printed_theta_equation, CartPoleLd};
use crate::cartpole::CartPoleParams;
use crate::error::VakonError;
use crate::models::SecondDifference;
use crate::numdiff::{check_derivatives, NoConstraints, ScalarFn, SlottedScalarFn};
use crate::oracle::{solve_direct, solve_homotopy, SolveStats};
use crate::reduce::{recover_controls, shoot_bvp, total_cost, ControlSeq, ControlledDiscreteSystem, ShootingGuess};
use crate::second_order::{flow2, kkt2, path_residuals, project_seed, SecondOrderProblem};
use crate::types::{ConfigPoint, Coords, DiscretePath, MultiplierSeq, SolverSettings};

use super::config::{ExperimentConfig, Model, SeedData};
use super::output::{line_plot_svg, write_csv, CsvRow};
use super::seed::{matched_seed, reference_positions, Seed};
use super::ExperimentError;

type Res<T> = Result<T, ExperimentError>;

struct Built {
    sys: Option<ControlledDiscreteSystem>,
    problem: SecondOrderProblem,
}

fn build(model: Model, params: &CartPoleParams, h: f64) -> Res<Built> {
    Ok(match model {
        Model::CartPole => {
            let (sys, problem) = discrete_system(params, h)?;
            Built { sys: Some(sys), problem }
        }
        Model::Toy => Built {
            sys: None,
            problem: SecondOrderProblem::new(
                Arc::new(SecondDifference { dim: 2 }),
                Arc::new(NoConstraints { arity: 3, dim: 2 }),
                h,
            )?,
        },
    })
}

fn resolve_seed(cfg: &ExperimentConfig, problem: &SecondOrderProblem) -> Res<Seed> {
    match cfg.require_seed()? {
        SeedData::Explicit { q, lam } => {
            let q = if cfg.project {
                project_seed(problem, [&q[0], &q[1], &q[2], &q[3]], &cfg.settings)?
            } else {
                q.clone()
            };
            Ok(Seed { q, lam: lam.clone() })
        }
        SeedData::Matched(state) => {
            if cfg.model != Model::CartPole {
                return Err(ExperimentError::Config("state0 seeds need the cart-pole model".into()));
            }
            Ok(matched_seed(&cfg.params, problem, *state, &cfg.settings)?)
        }
    }
}

/// A solved trajectory with its residuals and costs.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub label: &'static str,
    pub path: DiscretePath,
    pub lams: MultiplierSeq,
    pub controls: Option<ControlSeq>,
    pub max_res_stat: f64,
    pub max_res_con: f64,
    pub total_cost: Option<f64>,
    pub oracle: Option<SolveStats>,
    pub runtime: Duration,
    pub rows: Vec<CsvRow>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {} nodes, h = {}", self.label, self.path.len(), self.path.h())?;
        writeln!(f, "  max stationarity residual  {:.3e}", self.max_res_stat)?;
        writeln!(f, "  max constraint residual    {:.3e}", self.max_res_con)?;
        if let Some(c) = self.total_cost {
            writeln!(f, "  total cost                 {c:.12e}")?;
        }
        if let Some(s) = &self.oracle {
            writeln!(
                f,
                "  newton iterations          {} (residual {:.3e}{})",
                s.iterations,
                s.residual,
                if s.floor_limited { ", at rounding floor" } else { "" }
            )?;
        }
        write!(f, "  runtime                    {:.3} s", self.runtime.as_secs_f64())
    }
}

fn summarize(
    label: &'static str,
    built: &Built,
    path: DiscretePath,
    lams: MultiplierSeq,
    settings: &SolverSettings,
    started: Instant,
) -> Res<RunSummary> {
    let p = &built.problem;
    let res = path_residuals(p, &path, &lams, settings)?;
    let controls = built.sys.as_ref().map(|s| recover_controls(s, &path)).transpose()?;
    let total = built.sys.as_ref().map(|s| total_cost(s, &path)).transpose()?;
    let n = path.len();
    let rows = (0..n)
        .map(|k| {
            let q = path.point(k);
            let res_k = (k >= 2 && k + 2 < n).then(|| &res[k - 2]);
            CsvRow {
                k,
                t: path.time(k),
                x: q[0],
                theta: q[1],
                u: controls.as_ref().and_then(|c| c.at_node(k)).and_then(|u| u.get(0).copied()),
                lambda: (k < lams.len()).then(|| lams.get(k).get(0).copied()).flatten(),
                hamiltonian: None,
                res_stat: res_k.map(|r| r.stationarity.amax()),
                res_con: (p.m() > 0 && k + 2 < n)
                    .then(|| p.constraint(path.point(k), path.point(k + 1), path.point(k + 2)).amax()),
            }
        })
        .collect::<Vec<_>>();
    let max_res_stat = res.iter().map(|r| r.stationarity.amax()).fold(0.0, f64::max);
    let max_res_con = rows.iter().filter_map(|r| r.res_con).fold(0.0, f64::max);
    Ok(RunSummary {
        label,
        path,
        lams,
        controls,
        max_res_stat,
        max_res_con,
        total_cost: total,
        oracle: None,
        runtime: started.elapsed(),
        rows,
    })
}

fn write_outputs(cfg: &ExperimentConfig, rows: &[CsvRow], svg: Option<String>) -> Res<()> {
    if let Some(path) = &cfg.csv {
        write_csv(BufWriter::new(File::create(path)?), rows)?;
    }
    if let (Some(path), Some(svg)) = (&cfg.svg, svg) {
        std::fs::write(path, svg)?;
    }
    Ok(())
}

fn flow_from_config(cfg: &ExperimentConfig, label: &'static str) -> Res<(Built, RunSummary)> {
    let started = Instant::now();
    let built = build(cfg.model, &cfg.params, cfg.h)?;
    let seed = resolve_seed(cfg, &built.problem)?;
    let (path, lams) = flow2(&built.problem, seed.points(), seed.multipliers(), cfg.n_last, &cfg.settings)?;
    let summary = summarize(label, &built, path, lams, &cfg.settings, started)?;
    Ok((built, summary))
}

/// Discrete flow from seed data; writes the trajectory CSV if `csv` is set.
pub fn run_flow(cfg: &ExperimentConfig) -> Res<RunSummary> {
    let (_, summary) = flow_from_config(cfg, "flow")?;
    write_outputs(cfg, &summary.rows, None)?;
    Ok(summary)
}

/// Single shooting between `(b0, b1)` and `(b2, b3)`, starting from the
/// straight line between `b1` and `b2` moved onto the constraints.
pub fn run_bvp(cfg: &ExperimentConfig) -> Res<RunSummary> {
    let started = Instant::now();
    let b = cfg.require_boundary()?;
    let built = build(cfg.model, &cfg.params, cfg.h)?;
    let p = &built.problem;
    let n = cfg.n_last as f64;
    let along = |k: f64| ConfigPoint::new(b[1].coords() + (b[2].coords() - b[1].coords()) * ((k - 1.0) / (n - 2.0)));
    let [_, _, q2, q3] = project_seed(p, [b[0], b[1], &along(2.0)?, &along(3.0)?], &cfg.settings)?;
    let guess = ShootingGuess { q2, q3, lam0: Coords::zeros(p.m()), lam1: Coords::zeros(p.m()) };
    let (path, lams) = shoot_bvp(p, b, &guess, cfg.n_last, &cfg.settings)?;
    let summary = summarize("bvp (shooting)", &built, path, lams, &cfg.settings, started)?;
    write_outputs(cfg, &summary.rows, None)?;
    Ok(summary)
}

/// Direct transcription between `(b0, b1)` and `(b2, b3)`; `homotopy > 0`
/// switches to continuation in the terminal pair.
pub fn run_oracle(cfg: &ExperimentConfig) -> Res<RunSummary> {
    let started = Instant::now();
    let b = cfg.require_boundary()?;
    let built = build(cfg.model, &cfg.params, cfg.h)?;
    let (path, lams, stats) = if cfg.homotopy > 0 {
        solve_homotopy(&built.problem, b, cfg.n_last, cfg.homotopy, &cfg.settings)?
    } else {
        solve_direct(&built.problem, b, cfg.n_last, None, &cfg.settings)?
    };
    let mut summary = summarize("oracle", &built, path, lams, &cfg.settings, started)?;
    summary.oracle = Some(stats);
    write_outputs(cfg, &summary.rows, None)?;
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EnergySummary {
    pub run: RunSummary,
    pub report: EnergyReport,
    pub band: BandStats,
}

impl fmt::Display for EnergySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.run)?;
        writeln!(f, "energy reconstruction")?;
        writeln!(f, "  velocities: central differences; accelerations: second differences")?;
        writeln!(f, "  force F_k = -u_k; momenta from F_k and s * lambda^(k-1)")?;
        writeln!(f, "  multiplier scale used {:.12e}", self.report.scale)?;
        writeln!(
            f,
            "    theoretical -m l^2 = {:.12e}, calibrated = {:.12e}",
            self.report.scale_theoretical, self.report.scale_calibrated
        )?;
        writeln!(f, "  early-window amplitude     {:.6e}", self.band.early_amplitude)?;
        writeln!(f, "  max |H_k - H_0|            {:.6e}", self.band.max_deviation)?;
        write!(f, "  linear trend excursion     {:.6e}", self.band.trend_excursion)
    }
}

/// Reconstructed `H` along a cart-pole flow, with a CSV and an SVG plot.
pub fn run_energy_study(cfg: &ExperimentConfig) -> Res<EnergySummary> {
    if cfg.model != Model::CartPole {
        return Err(ExperimentError::Config("the energy study needs the cart-pole model".into()));
    }
    let (_, mut run) = flow_from_config(cfg, "energy")?;
    let controls = run.controls.clone().expect("cart-pole runs have controls");
    let report = energy_series(&cfg.params, &run.path, &run.lams, &controls, cfg.scale)?;
    for (row, node) in run.rows.iter_mut().zip(&report.nodes) {
        row.hamiltonian = node.hamiltonian;
    }
    let series = report.hamiltonian_series();
    let values: Vec<f64> = series.iter().map(|v| v.1).collect();
    let band = band_stats(&values, cfg.h, cfg.early)?;
    let pts: Vec<(f64, f64)> = series.iter().map(|&(k, v)| (k as f64, v)).collect();
    let svg = line_plot_svg("Reconstructed H along the discrete flow", "step k", "H", &pts);
    write_outputs(cfg, &run.rows, Some(svg))?;
    Ok(EnergySummary { run, report, band })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub n_last: usize,
    /// `max_k |q_k - q(t_k)|_inf`.
    pub max_error: f64,
    /// `log2(e(h_prev) / e(h))`, scaled by the step ratio when it is not 2.
    pub order: Option<f64>,
}

fn toy_reference(seed: &[ConfigPoint; 4], horizon: f64, t: f64) -> Coords {
    // Lagrange cubic through the seed points placed at 0, T/3, 2T/3, T.
    let nodes = [0.0, horizon / 3.0, 2.0 * horizon / 3.0, horizon];
    let mut out = Coords::zeros(seed[0].dim());
    for i in 0..4 {
        let w: f64 = (0..4)
            .filter(|&j| j != i)
            .map(|j| (t - nodes[j]) / (nodes[i] - nodes[j]))
            .product();
        out += seed[i].coords() * w;
    }
    out
}

fn convergence_one(cfg: &ExperimentConfig, h: f64, n_last: usize) -> Res<f64> {
    let built = build(cfg.model, &cfg.params, h)?;
    let p = &built.problem;
    let (seed, reference): (Seed, Vec<Coords>) = match (cfg.model, cfg.require_seed()?) {
        (Model::CartPole, SeedData::Matched(state)) => {
            let reference = reference_positions(&cfg.params, *state, h, n_last)?
                .into_iter()
                .map(ConfigPoint::into_coords)
                .collect();
            (matched_seed(&cfg.params, p, *state, &cfg.settings)?, reference)
        }
        (Model::Toy, SeedData::Explicit { q, .. }) => {
            let reference: Vec<Coords> = (0..=n_last).map(|k| toy_reference(q, cfg.horizon, k as f64 * h)).collect();
            let seed_pts = [0, 1, 2, 3].map(|k| ConfigPoint::new(reference[k].clone()));
            let [a, b, c, d] = seed_pts;
            (Seed { q: [a?, b?, c?, d?], lam: [Coords::zeros(0), Coords::zeros(0)] }, reference)
        }
        _ => {
            return Err(ExperimentError::Config(
                "convergence needs state0 for the cart-pole or q0..q3 for the toy".into(),
            ))
        }
    };
    let (path, _) = flow2(p, seed.points(), seed.multipliers(), n_last, &cfg.settings)?;
    Ok(path
        .points()
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a.coords() - b).amax())
        .fold(0.0, f64::max))
}

/// Flow error against the continuous solution for every `h` in `h_list`,
/// one thread per step size.
pub fn run_convergence(cfg: &ExperimentConfig) -> Res<Vec<ConvergenceRow>> {
    if cfg.h_list.len() < 3 {
        return Err(VakonError::Precondition(format!(
            "convergence needs at least 3 step sizes, got {}",
            cfg.h_list.len()
        ))
        .into());
    }
    let mut steps = Vec::with_capacity(cfg.h_list.len());
    for &h in &cfg.h_list {
        let n = (cfg.horizon / h).round();
        if !(h > 0.0 && n >= 4.0 && (n * h - cfg.horizon).abs() <= 1e-9 * cfg.horizon.max(1.0)) {
            return Err(VakonError::Precondition(format!("h = {h} must divide T = {} into >= 4 steps", cfg.horizon)).into());
        }
        steps.push((h, n as usize));
    }
    let errors: Vec<Res<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = steps
            .iter()
            .map(|&(h, n)| scope.spawn(move || convergence_one(cfg, h, n)))
            .collect();
        handles.into_iter().map(|t| t.join().expect("convergence worker panicked")).collect()
    });
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(steps.len());
    for ((h, n), e) in steps.into_iter().zip(errors) {
        let e = e?;
        let order = rows.last().map(|prev| (prev.max_error / e).log2() / (prev.h / h).log2());
        rows.push(ConvergenceRow { h, n_last: n, max_error: e, order });
    }
    if let Some(path) = &cfg.svg {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h.log2(), r.max_error.max(1e-300).log2())).collect();
        std::fs::write(path, line_plot_svg("Flow error against the continuous solution", "log2 h", "log2 error", &pts))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.lines.push(CheckLine { name: name.into(), passed, detail: detail.into() });
    }

    pub fn failures(&self) -> usize {
        self.lines.iter().filter(|l| !l.passed).count()
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {:<28} {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail)?;
        }
        write!(f, "{} of {} checks passed", self.lines.len() - self.failures(), self.lines.len())
    }
}

pub const DERIVATIVE_TOL: f64 = 1e-6;

/// Random bounded cart-pole triples: positions in a unit box around the
/// hanging and upright states, speeds at most 1.
pub fn random_triples(rng: &mut impl Rng, h: f64, count: usize) -> Vec<Vec<Coords>> {
    (0..count)
        .map(|_| {
            let q0 = dvector![rng.gen_range(-1.0..1.0), rng.gen_range(-3.2..3.2)];
            let v = [0, 1].map(|_| dvector![rng.gen_range(-1.0..1.0) * h, rng.gen_range(-1.0..1.0) * h]);
            let q1 = &q0 + &v[0];
            let q2 = &q1 + &v[1];
            vec![q0, q1, q2]
        })
        .collect()
}

fn corrupted(cfg: &ExperimentConfig, name: &str, v: Coords) -> Coords {
    if cfg.corrupt.as_deref() == Some(name) {
        v.map(|x| x + 1e-3 * (1.0 + x.abs()))
    } else {
        v
    }
}

/// Derivative gates, the constraint and force identities, regularity, the
/// printed `Phi_d = h^2 EL` identity and the step matrix at random states.
///
/// `corrupt = <check name>` perturbs that analytic derivative, to show the
/// gate can fail.
pub fn run_check(cfg: &ExperimentConfig) -> Res<CheckReport> {
    let p = cfg.params;
    let h = cfg.h;
    let s = &cfg.settings;
    let count = cfg.samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let triples = random_triples(&mut rng, h, count);
    let mut report = CheckReport::default();
    let gate = |report: &mut CheckReport, name: String, worst: f64| {
        report.push(name, worst <= DERIVATIVE_TOL, format!("max rel. error {worst:.2e}"));
    };

    let ld = CartPoleLd::new(p, h)?;
    let pairs: Vec<Vec<Coords>> = triples.iter().map(|t| t[..2].to_vec()).collect();
    for slot in 0..2 {
        let name = format!("Ld.D{}", slot + 1);
        let worst = check_derivatives(
            |pts| corrupted(cfg, &name, ld.partial(slot, pts, s).expect("shape checked")),
            &ld,
            slot,
            &pairs,
            s,
        )?;
        gate(&mut report, name, worst);
    }
    let (_, problem) = discrete_system(&p, h)?;
    let lt = problem.lagrangian();
    for slot in 0..3 {
        let name = format!("Ltilde_d.D{}", slot + 1);
        let worst = check_derivatives(
            |pts| corrupted(cfg, &name, lt.partial(slot, pts, s).expect("shape checked")),
            lt,
            slot,
            &triples,
            s,
        )?;
        gate(&mut report, name, worst);
    }
    let phi = problem.constraints();
    let phi_scalar = ScalarFn::new(3, 2, |pts: &[&Coords]| phi.eval(pts)[0]);
    for slot in 0..3 {
        let name = format!("Phi_d.D{}", slot + 1);
        let worst = check_derivatives(
            |pts| corrupted(cfg, &name, phi.jacobian(slot, pts, s).expect("shape checked").row(0).transpose()),
            &phi_scalar,
            slot,
            &triples,
            s,
        )?;
        gate(&mut report, name, worst);
    }
    // Continuous pieces as one-slot functions of (theta, thetadot, xddot).
    let states: Vec<Vec<Coords>> = (0..count)
        .map(|_| vec![dvector![rng.gen_range(-3.2..3.2), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]])
        .collect();
    let lm = ScalarFn::new(1, 3, |v: &[&Coords]| ltilde_m(&p, v[0][0], v[0][1], v[0][2]));
    let worst = check_derivatives(
        |v| corrupted(cfg, "Ltilde_M", Coords::from_row_slice(&ltilde_m_partials(&p, v[0][0], v[0][1], v[0][2]))),
        &lm,
        0,
        &states,
        s,
    )?;
    gate(&mut report, "Ltilde_M".into(), worst);
    let fb = ScalarFn::new(1, 3, |v: &[&Coords]| bracket_f(&p, v[0][0], v[0][1], v[0][2]));
    let worst = check_derivatives(
        |v| corrupted(cfg, "F", Coords::from_row_slice(&bracket_f_partials(&p, v[0][0], v[0][1], v[0][2]))),
        &fb,
        0,
        &states,
        s,
    )?;
    gate(&mut report, "F".into(), worst);
    let g2: Vec<Vec<Coords>> = states.iter().map(|v| vec![dvector![v[0][0], v[0][2]]]).collect();
    let gf = ScalarFn::new(1, 2, |v: &[&Coords]| constraint_g(&p, v[0][0], v[0][1]));
    let worst = check_derivatives(
        |v| {
            let (a, b) = constraint_g_partials(&p, v[0][0], v[0][1]);
            corrupted(cfg, "G", dvector![a, b])
        },
        &gf,
        0,
        &g2,
        s,
    )?;
    gate(&mut report, "G".into(), worst);

    let identity = states
        .iter()
        .map(|v| {
            let (th, thd, xdd) = (v[0][0], v[0][1], v[0][2]);
            let lhs = force_u(&p, th, thd, xdd, constraint_g(&p, th, xdd));
            (lhs - bracket_f(&p, th, thd, xdd)).abs() / (1.0 + lhs.abs())
        })
        .fold(0.0, f64::max);
    report.push("force identity", identity <= 1e-12, format!("max rel. error {identity:.2e}"));

    let mut worst_r: f64 = 0.0;
    let mut min_r = f64::INFINITY;
    for i in 0..=720 {
        let th = -std::f64::consts::PI + i as f64 * std::f64::consts::PI / 360.0;
        let r = regularity_r(&p, th);
        let expect = (p.total_mass() - p.m * th.cos().powi(2)).powi(2);
        worst_r = worst_r.max((r - expect).abs());
        min_r = min_r.min(r);
    }
    report.push(
        "regularity",
        worst_r <= 1e-12 && (min_r - p.big_m * p.big_m).abs() <= 1e-12 && min_r > 0.0,
        format!("grid min {min_r:.12e}, M^2 = {:.12e}", p.big_m * p.big_m),
    );

    let cross = triples
        .iter()
        .map(|t| {
            let a = printed_phi(&p, h, &t[0], &t[1], &t[2]);
            let b = h * h * printed_theta_equation(&p, h, &t[0], &t[1], &t[2]);
            (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    report.push("Phi_d = h^2 EL", cross <= 1e-10, format!("max rel. error {cross:.2e}"));

    let reduced = triples
        .iter()
        .map(|t| {
            let refs = [&t[0], &t[1], &t[2]];
            let a = problem.constraint(refs[0], refs[1], refs[2])[0] * h * h;
            let b = printed_phi(&p, h, refs[0], refs[1], refs[2]);
            (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max);
    report.push("Phi_d = h^2 reduced", reduced <= 1e-10, format!("max rel. error {reduced:.2e}"));

    let mut min_rel: f64 = f64::INFINITY;
    for t in &triples {
        let lam = dvector![rng.gen_range(-1.0..1.0)];
        let k = kkt2(&problem, &t[0], &t[1], &t[2], &lam, s)?;
        min_rel = min_rel.min(k.regularity.pivot_ratio);
    }
    report.push(
        "step matrix regular",
        min_rel > s.singular_tol,
        format!("min pivot ratio {min_rel:.2e} (tol {:.1e})", s.singular_tol),
    );
    Ok(report)
}
