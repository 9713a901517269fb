//! Oracle suites: fast paths against brute force, and the refinement studies.

use fplay_core::hamiltonian::{convexity_sweep, DriftField, QuadraticHamiltonian};
use fplay_core::geometry::TorusGrid;
use fplay_core::verification::{
    bellman_sweep, cesaro_fixtures, d1_sweep, fp_refinement, hjb_refinement, legendre_sweep, Check,
};
use fplay_core::Exec;

use crate::CliError;

/// Ratio window for first-order convergence under refinement.
pub const RATIO_WINDOW: (f64, f64) = (1.7, 2.3);

pub fn run_checks(exec: Exec) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let b = bellman_sweep(50, 17)?;
    checks.push(Check::new(
        "bellman vs enumeration",
        b.mismatches == 0 && b.max_gap <= 1e-12,
        format!("{} couplings, value gap {:.1e}, {} trajectory mismatches", b.cases, b.max_gap, b.mismatches),
    ));
    let d = d1_sweep(100, 16, 23)?;
    checks.push(Check::new("d1 vs transport", d.max_gap <= 1e-9, format!("{} pairs, gap {:.1e}", d.cases, d.max_gap)));
    let l = legendre_sweep(100, 29)?;
    checks.push(Check::new("legendre vs grid search", l.max_gap <= 1e-5, format!("{} samples, gap {:.1e}", l.cases, l.max_gap)));
    let grid = TorusGrid::new(2, 8)?;
    let drift: Vec<f64> = (0..grid.cells() * 2).map(|i| 1.5 * ((i * 37 % 11) as f64 / 5.0 - 1.0)).collect();
    let ham = QuadraticHamiltonian::new(DriftField::from_samples(grid, drift)?);
    let c = convexity_sweep(&ham, 10_000, 5.0, 31, exec);
    checks.push(Check::new(
        "convexity inequality",
        c.min_slack >= -1e-10,
        format!("{} samples, min slack {:.2e}", c.samples, c.min_slack),
    ));
    for fixture in cesaro_fixtures()? {
        checks.push(Check::new(format!("cesaro {}", fixture.name), fixture.passed, fixture.detail));
    }
    for (name, r) in [("hjb refinement", hjb_refinement(32)?), ("fp refinement", fp_refinement(32)?)] {
        checks.push(Check::new(
            name,
            (RATIO_WINDOW.0..=RATIO_WINDOW.1).contains(&r.ratio),
            format!("error {:.3e} -> {:.3e}, ratio {:.3}", r.coarse, r.fine, r.ratio),
        ));
    }
    Ok(checks)
}
