//! End-to-end runs of the cart-pole and toy pipelines.

use nalgebra::dvector;
use vakonomic::cartpole::continuous::ReducedState;
use vakonomic::cartpole::diagnostics::{band_stats, energy_series, MultiplierScale};
use vakonomic::cartpole::discrete::discrete_system;
use vakonomic::cartpole::CartPoleParams;
use vakonomic::experiments::output::read_csv;
use vakonomic::experiments::seed::matched_seed;
use vakonomic::experiments::{run_energy_study, run_flow, ExperimentConfig, RawConfig};
use vakonomic::oracle::{global_residual, minimality_check, solve_direct, GlobalVars};
use vakonomic::reduce::{recover_controls, shoot_bvp, total_cost, ShootingGuess};
use vakonomic::second_order::{flow2, kkt2, project_seed, residual2_parts};
use vakonomic::types::{ConfigPoint, Coords, DiscretePath, MultiplierSeq, SolverSettings};

const SWING: &str = "state0 = 0, 2.84, 0.1, 0, 0, 0, 0, 0\n";

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_raw(&RawConfig::parse(text).unwrap()).unwrap()
}

fn swing_flow(h: f64, n: usize) -> (DiscretePath, MultiplierSeq) {
    let p = CartPoleParams::default();
    let s = SolverSettings::default();
    let (_, problem) = discrete_system(&p, h).unwrap();
    let st = ReducedState::from_physical(&p, 0.0, 2.84, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0);
    let seed = matched_seed(&p, &problem, st, &s).unwrap();
    flow2(&problem, seed.points(), seed.multipliers(), n, &s).unwrap()
}

fn upright_oracle() -> (DiscretePath, MultiplierSeq) {
    let (_, problem) = discrete_system(&CartPoleParams::default(), 0.05).unwrap();
    let a = ConfigPoint::from_slice(&[0.0, 0.1]).unwrap();
    let b = ConfigPoint::from_slice(&[0.0, 0.05]).unwrap();
    let (path, lams, _) = solve_direct(&problem, [&a, &a, &b, &b], 20, None, &SolverSettings::default()).unwrap();
    (path, lams)
}

fn ulp(x: f64) -> f64 {
    f64::from_bits(x.abs().to_bits() + 1) - x.abs()
}

#[test]
fn flow_residual_sits_at_the_representation_floor() {
    // Moving the new point by one ulp changes the stationarity residual by
    // more than the residual the flow leaves behind.
    let s = SolverSettings::default();
    let (_, problem) = discrete_system(&CartPoleParams::default(), 0.01).unwrap();
    let (path, lams) = swing_flow(0.01, 200);
    for k in 2..=path.len() - 3 {
        let q: [&Coords; 5] = std::array::from_fn(|i| path.point(k - 2 + i).coords());
        let lam: [&Coords; 3] = std::array::from_fn(|i| lams.get(k - 2 + i));
        let r = residual2_parts(&problem, q, lam, &s).unwrap();
        let jac = kkt2(&problem, q[2], q[3], q[4], lam[2], &s).unwrap().matrix;
        let floor = (0..2).map(|j| jac.view((0, j), (2, 1)).amax() * ulp(q[4][j])).fold(0.0, f64::max);
        assert!(r.stationarity.amax() <= floor, "node {k}: {} > {floor}", r.stationarity.amax());
        assert!(r.constraint.amax() <= 1e-12);
    }
}

#[test]
fn csv_from_a_real_run_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.csv");
    let cfg = config(&format!("h = 0.01\nN = 40\n{SWING}csv = {}\n", file.display()));
    let summary = run_flow(&cfg).unwrap();
    let rows = read_csv(std::fs::File::open(&file).unwrap()).unwrap();
    assert_eq!(rows, summary.rows);
    assert_eq!(rows.len(), 41);
    assert!(rows[0].u.is_none() && rows[1].u.is_some() && rows[40].u.is_none());
    assert!(rows[1].res_stat.is_none() && rows[2].res_stat.is_some() && rows[38].res_stat.is_some());
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r.k, k);
        assert!((r.t - k as f64 * 0.01).abs() < 1e-15);
    }
}

#[test]
fn control_column_sums_to_the_total_cost() {
    let summary = run_flow(&config(&format!("h = 0.01\nN = 60\n{SWING}"))).unwrap();
    let half_sum: f64 = summary.rows.iter().filter_map(|r| r.u).map(|u| 0.5 * u * u).sum();
    let total = summary.total_cost.unwrap();
    assert!((half_sum - total).abs() <= 1e-12 * total.max(1.0), "{half_sum} vs {total}");
    let (sys, _) = discrete_system(&CartPoleParams::default(), 0.01).unwrap();
    assert!((total_cost(&sys, &summary.path).unwrap() - total).abs() <= 1e-12 * total);
}

#[test]
fn resting_hanging_pendulum_has_zero_energy() {
    let out = run_energy_study(&config("h = 0.01\nN = 50\nstate0 = 0, 3.141592653589793, 0, 0, 0, 0, 0, 0\n"))
        .unwrap();
    for (_, h) in out.report.hamiltonian_series() {
        assert!(h.abs() < 1e-9, "H = {h}");
    }
    assert!(out.run.path.points().iter().all(|q| (q[1] - std::f64::consts::PI).abs() < 1e-12));
}

#[test]
fn solve_direct_minimizes_cost_among_feasible_neighbours() {
    let p = CartPoleParams::default();
    let s = SolverSettings::default();
    let (sys, problem) = discrete_system(&p, 0.05).unwrap();
    let (path, _) = upright_oracle();
    let report = minimality_check(&sys, &problem, &path, 50, 1e-4, 11, &s).unwrap();
    assert_eq!(report.perturbed_costs.len(), 50);
    assert!(report.max_projection_residual < 1e-9);
    for c in &report.perturbed_costs {
        assert!(*c >= report.base_cost - 1e-9, "{c} < {}", report.base_cost);
    }
}

#[test]
fn flow_path_is_a_zero_of_the_global_system() {
    let s = SolverSettings::default();
    let (_, problem) = discrete_system(&CartPoleParams::default(), 0.05).unwrap();
    let (path, lams) = upright_oracle();
    let (flowed, flams) = flow2(
        &problem,
        [path.point(0), path.point(1), path.point(2), path.point(3)],
        [lams.get(0), lams.get(1)],
        20,
        &s,
    )
    .unwrap();
    let pts: Vec<Coords> = flowed.points().iter().map(|q| q.coords().clone()).collect();
    let vars = GlobalVars::from_parts(&pts[2..19], &flams.as_slice()[..19]);
    let boundary = [flowed.point(0), flowed.point(1), flowed.point(19), flowed.point(20)];
    let r = global_residual(&problem, boundary, &vars, 20, &s).unwrap();
    assert!(r.amax() < 1e-8, "{}", r.amax());
}

#[test]
fn shooting_agrees_with_direct_transcription() {
    let s = SolverSettings::default();
    let (_, problem) = discrete_system(&CartPoleParams::default(), 0.05).unwrap();
    let a = ConfigPoint::from_slice(&[0.0, 0.1]).unwrap();
    let b = ConfigPoint::from_slice(&[0.02, 0.08]).unwrap();
    let boundary = [&a, &a, &b, &b];
    let (direct, _, _) = solve_direct(&problem, boundary, 12, None, &s).unwrap();
    // The guess must satisfy the constraints of the first two windows.
    let [_, _, q2, q3] = project_seed(&problem, [&a, &a, &a, &a], &s).unwrap();
    let guess = ShootingGuess { q2, q3, lam0: dvector![0.0], lam1: dvector![0.0] };
    let (shot, _) = shoot_bvp(&problem, boundary, &guess, 12, &s).unwrap();
    for k in 0..=12 {
        assert!((shot.point(k).coords() - direct.point(k).coords()).amax() < 1e-5, "node {k}");
    }
}

#[test]
fn energy_oscillation_shrinks_with_the_step() {
    let p = CartPoleParams::default();
    let amplitude = |h: f64| {
        let (sys, _) = discrete_system(&p, h).unwrap();
        let (path, lams) = swing_flow(h, (2.0 / h).round() as usize);
        let controls = recover_controls(&sys, &path).unwrap();
        let e = energy_series(&p, &path, &lams, &controls, MultiplierScale::Calibrated).unwrap();
        let v: Vec<f64> = e.hamiltonian_series().into_iter().map(|x| x.1).collect();
        band_stats(&v, h, v.len()).unwrap().early_amplitude
    };
    let (a, b) = (amplitude(0.02), amplitude(0.01));
    assert!(b / a < 1.0, "{b} / {a}");
}

#[test]
fn calibrated_scale_is_near_the_theoretical_one() {
    let p = CartPoleParams::default();
    let (sys, _) = discrete_system(&p, 0.01).unwrap();
    let (path, lams) = swing_flow(0.01, 200);
    let controls = recover_controls(&sys, &path).unwrap();
    let e = energy_series(&p, &path, &lams, &controls, MultiplierScale::Theoretical).unwrap();
    assert!((e.scale_calibrated / e.scale_theoretical - 1.0).abs() < 1e-3);
    assert_eq!(e.scale, -p.m * p.l * p.l);
}
