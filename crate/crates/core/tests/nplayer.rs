use std::f64::consts::TAU;

use fplay_core::coupling::ConvolutionCoupling;
use fplay_core::geometry::{sup_t_d1, ProbabilityVector, TimeGrid, TorusGrid};
use fplay_core::hamiltonian::QuadraticHamiltonian;
use fplay_core::nplayer::{compare_to_mfg, place_players, run_nplayer, Placement, PlayerSet};
use fplay_core::report::{PlayConfig, Termination};
use fplay_core::trajectory::{run_first_order, FirstOrderProblem, StrategyState};
use fplay_core::Exec;

fn problem(coeffs: &[f64], m0: ProbabilityVector, play: PlayConfig) -> FirstOrderProblem {
    let grid = *m0.grid();
    let f = ConvolutionCoupling::from_cosine(grid, coeffs, 0.0).unwrap();
    FirstOrderProblem::new(m0, QuadraticHamiltonian::free(grid), f.clone(), f, TimeGrid::new(1.0, 16).unwrap(), Some(4), play)
        .unwrap()
}

#[test]
fn quantile_distance_halves_when_players_double() {
    let grid = TorusGrid::line(256).unwrap();
    let m0 = ProbabilityVector::uniform(grid);
    let d: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|n| place_players(&m0, *n, Placement::Quantile).unwrap().d1_to_m0())
        .collect();
    for w in d.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.35..=0.65).contains(&ratio), "{d:?}");
    }
}

#[test]
fn lone_player_without_coupling_stays_put() {
    let grid = TorusGrid::line(16).unwrap();
    let p = problem(&[0.0], ProbabilityVector::uniform(grid), PlayConfig::default());
    let players = place_players(&p.m0, 1, Placement::Quantile).unwrap();
    let out = run_nplayer(&p, &players).unwrap();
    assert!(out.outcome.report.records.iter().all(|r| r.a_n == 0.0));
    assert_eq!(out.outcome.report.termination, Termination::FixedPoint);
    let traj = &out.trajectories[0];
    assert!(traj.cells().iter().all(|c| *c == players.cells()[0]));
}

#[test]
fn trivial_coupling_distance_is_the_initial_distance() {
    let grid = TorusGrid::line(32).unwrap();
    let m0 = ProbabilityVector::from_fn(grid, |x| 1.0 + 0.8 * (TAU * x[0]).cos()).unwrap();
    let p = problem(&[0.0], m0.clone(), PlayConfig::default());
    let mfg = run_first_order(&p, StrategyState::new(&p)).unwrap();
    let players = place_players(&m0, 7, Placement::Quantile).unwrap();
    let out = run_nplayer(&p, &players).unwrap();
    let d = compare_to_mfg(&out.outcome.report, &mfg.report, Exec::default()).unwrap();
    assert!((d - players.d1_to_m0()).abs() <= 1e-12);
}

#[test]
fn empirical_pushforward_keeps_unit_mass_and_nonnegative_exploitability() {
    let grid = TorusGrid::line(32).unwrap();
    let m0 = ProbabilityVector::from_fn(grid, |x| 1.0 + 0.8 * (TAU * x[0]).cos()).unwrap();
    let play = PlayConfig { n_max: 30, ..PlayConfig::default() };
    let p = problem(&[1.0, 0.5, 0.25], m0.clone(), play);
    for n in [3, 10] {
        let players = place_players(&m0, n, Placement::Iid { seed: 5 }).unwrap();
        let out = run_nplayer(&p, &players).unwrap();
        assert!(out.outcome.report.belief.max_mass_drift() <= 1e-13);
        assert!(out.outcome.report.a_history().iter().all(|a| *a >= -1e-10));
        assert_eq!(out.trajectories.len(), n);
    }
}

#[test]
fn mismatched_runs_are_not_comparable() {
    let a = problem(&[0.0], ProbabilityVector::uniform(TorusGrid::line(16).unwrap()), PlayConfig::default());
    let b = problem(&[0.0], ProbabilityVector::uniform(TorusGrid::line(32).unwrap()), PlayConfig::default());
    let ra = run_first_order(&a, StrategyState::new(&a)).unwrap();
    let rb = run_first_order(&b, StrategyState::new(&b)).unwrap();
    assert!(compare_to_mfg(&ra.report, &rb.report, Exec::default()).is_err());
    assert_eq!(sup_t_d1(&ra.report.belief, &ra.report.belief).unwrap(), 0.0);
}

#[test]
fn players_must_sit_on_the_grid() {
    let m0 = ProbabilityVector::uniform(TorusGrid::line(8).unwrap());
    assert!(PlayerSet::from_cells(&m0, vec![8]).is_err());
    assert!(PlayerSet::from_cells(&m0, vec![]).is_err());
}
