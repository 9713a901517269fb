use std::f64::consts::TAU;

use fplay_core::fokker_planck::{continuity_residual, solve_fp_forward};
use fplay_core::geometry::{ProbabilityVector, ScalarFlow, TorusGrid};
use fplay_core::hamiltonian::QuadraticHamiltonian;
use fplay_core::hjb::{hjb_backward, HjbScheme};
use fplay_core::verification::{fp_refinement, hjb_refinement};
use fplay_core::Exec;
use proptest::prelude::*;

#[test]
fn hjb_manufactured_solution_converges_at_first_order() {
    let r = hjb_refinement(32).unwrap();
    assert!((1.7..=2.3).contains(&r.ratio), "{r:?}");
}

#[test]
fn fp_manufactured_solution_converges_at_first_order() {
    let r = fp_refinement(32).unwrap();
    assert!((1.7..=2.3).contains(&r.ratio), "{r:?}");
}

#[test]
fn stability_bound_holds() {
    let grid = TorusGrid::line(32).unwrap();
    let scheme = HjbScheme::new(6.0, 0.5).unwrap();
    let time = scheme.auto_time(&grid, 1.0).unwrap();
    let source = ScalarFlow::from_fn(grid, time, |t, x| 2.0 * (TAU * x[0] + t).sin());
    let terminal: Vec<f64> = (0..32).map(|c| 0.5 * (TAU * grid.position(c, 0)).cos()).collect();
    let u = hjb_backward(&terminal, &source, &QuadraticHamiltonian::free(grid), &scheme, Exec::default()).unwrap();
    assert!(u.max_abs() <= 1.0 * source.max_abs() + 0.5 + 1e-12);
}

fn smooth_field(coeffs: &[f64], x: f64, t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| c * (TAU * (k + 1) as f64 * x + t).sin())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hjb_comparison_principle(
        a in prop::collection::vec(-0.5f64..0.5, 3),
        bump in prop::collection::vec(0.0f64..0.3, 16),
        gap in 0.0f64..0.2,
    ) {
        let grid = TorusGrid::line(16).unwrap();
        let scheme = HjbScheme::new(8.0, 0.5).unwrap();
        let time = scheme.auto_time(&grid, 0.5).unwrap();
        let ham = QuadraticHamiltonian::free(grid);
        let low = ScalarFlow::from_fn(grid, time, |t, x| smooth_field(&a, x[0], t));
        let high = ScalarFlow::from_fn(grid, time, |t, x| {
            let cell = (x[0] * 16.0).round() as usize % 16;
            smooth_field(&a, x[0], t) + bump[cell]
        });
        let g1: Vec<f64> = (0..16).map(|c| smooth_field(&a, grid.position(c, 0), 0.5)).collect();
        let g2: Vec<f64> = g1.iter().map(|v| v + gap).collect();
        let u1 = hjb_backward(&g1, &low, &ham, &scheme, Exec::default()).unwrap();
        let u2 = hjb_backward(&g2, &high, &ham, &scheme, Exec::default()).unwrap();
        prop_assert!(u1.as_slice().iter().zip(u2.as_slice()).all(|(x, y)| x <= y));
    }

    #[test]
    fn fp_conserves_mass_and_positivity(
        w in prop::collection::vec(0.0f64..1.0, 24),
        a in prop::collection::vec(-0.3f64..0.3, 3),
    ) {
        prop_assume!(w.iter().sum::<f64>() > 0.1);
        let grid = TorusGrid::line(24).unwrap();
        let scheme = HjbScheme::new(12.0, 0.5).unwrap();
        let time = scheme.auto_time(&grid, 0.3).unwrap();
        let m0 = ProbabilityVector::normalized(grid, w).unwrap();
        let u = ScalarFlow::from_fn(grid, time, |t, x| smooth_field(&a, x[0], t));
        let (m, flux) = solve_fp_forward(&u, &m0, &QuadraticHamiltonian::free(grid), &scheme, Exec::default()).unwrap();
        prop_assert!(m.max_mass_drift() <= 1e-13);
        prop_assert!(m.min_value() >= -1e-13);
        prop_assert!(continuity_residual(&m, &flux, &scheme).unwrap() <= 1e-12);
    }
}
