//! Self-check studies: manufactured-solution refinement for both PDE schemes
//! and randomized sweeps of the fast paths against the brute-force oracles.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coupling::ConvolutionCoupling;
use crate::diagnostics::{cesaro_check, DEFAULT_TAIL_FRACTION};
use crate::error::Result;
use crate::fokker_planck::solve_fp_forward;
use crate::geometry::{d1_distance, d1_distance_lp, DensityFlow, ProbabilityVector, ScalarFlow, TimeGrid, TorusGrid};
use crate::hamiltonian::{DriftField, QuadraticHamiltonian};
use crate::hjb::{hjb_backward, HjbScheme};
use crate::oracles;
use crate::par::Exec;
use crate::report::PlayConfig;
use crate::trajectory::{bellman_best_response, ControlSet, FirstOrderProblem};

/// Time step as a fixed multiple of `h^2` in refinement studies.
pub const REFINEMENT_CFL_RATIO: f64 = 0.2;

/// Errors on a grid and on its refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Refinement {
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
}

fn refined_time(n: usize, horizon: f64) -> Result<TimeGrid> {
    let h = 1.0 / n as f64;
    TimeGrid::new(horizon, (horizon / (REFINEMENT_CFL_RATIO * h * h)).round() as usize)
}

/// Max error against `u*(t, x) = cos(2 pi x) (T - t)`, `T = 1`, whose source
/// is computed analytically for `-u_t - u_xx + |u_x|^2 / 2 = f`.
pub fn hjb_manufactured_error(n: usize) -> Result<f64> {
    let grid = TorusGrid::line(n)?;
    let time = refined_time(n, 1.0)?;
    let scheme = HjbScheme::new(TAU + 1.0, 0.5)?;
    let source = ScalarFlow::from_fn(grid, time, |t, x| {
        let s = 1.0 - t;
        let (c, sn) = ((TAU * x[0]).cos(), (TAU * x[0]).sin());
        c + 4.0 * PI * PI * c * s + 0.5 * (TAU * sn * s).powi(2)
    });
    let u = hjb_backward(&vec![0.0; n], &source, &QuadraticHamiltonian::free(grid), &scheme, Exec::default())?;
    let mut err: f64 = 0.0;
    for k in 0..time.nodes() {
        for (c, v) in u.slice(k).iter().enumerate() {
            err = err.max((v - (TAU * grid.position(c, 0)).cos() * (1.0 - time.t(k))).abs());
        }
    }
    Ok(err)
}

/// Max error against the stationary density `m* ~ exp(-V)`, `V = cos(2 pi x) / 2`,
/// transported by the drift of `u = V` over `[0, 1/2]`.
pub fn fp_manufactured_error(n: usize) -> Result<f64> {
    let kappa = 0.5;
    let grid = TorusGrid::line(n)?;
    let time = refined_time(n, 0.5)?;
    let scheme = HjbScheme::new(TAU * kappa + 1.0, 0.5)?;
    let potential = |x: f64| kappa * (TAU * x).cos();
    let u = ScalarFlow::from_fn(grid, time, |_, x| potential(x[0]));
    let stationary = ProbabilityVector::from_fn(grid, |x| (-potential(x[0])).exp())?;
    let (m, _) = solve_fp_forward(&u, &stationary, &QuadraticHamiltonian::free(grid), &scheme, Exec::default())?;
    Ok(m.as_slice()
        .chunks(n)
        .flat_map(|slice| slice.iter().zip(stationary.as_slice()).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max))
}

fn refinement(error: impl Fn(usize) -> Result<f64>, n: usize) -> Result<Refinement> {
    let (coarse, fine) = (error(n)?, error(2 * n)?);
    Ok(Refinement { coarse, fine, ratio: coarse / fine })
}

pub fn hjb_refinement(n: usize) -> Result<Refinement> {
    refinement(hjb_manufactured_error, n)
}

pub fn fp_refinement(n: usize) -> Result<Refinement> {
    refinement(fp_manufactured_error, n)
}

/// Outcome of a randomized comparison against an oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSweep {
    pub cases: usize,
    /// Largest absolute disagreement in value.
    pub max_gap: f64,
    /// Cases whose discrete answer (e.g. the optimal trajectory) differed.
    pub mismatches: usize,
}

fn random_density(grid: TorusGrid, rng: &mut ChaCha8Rng) -> Result<ProbabilityVector> {
    let w = (0..grid.cells()).map(|_| rng.random::<f64>() + 1e-3).collect();
    ProbabilityVector::normalized(grid, w)
}

/// Bellman best responses against exhaustive enumeration on `Nx = 5`, `K = 3`
/// with moves `{-1, 0, 1}`, for random smooth couplings, drifts and beliefs.
pub fn bellman_sweep(cases: usize, seed: u64) -> Result<OracleSweep> {
    let grid = TorusGrid::line(5)?;
    let time = TimeGrid::new(1.0, 3)?;
    let controls = ControlSet::from_moves(1, vec![[-1, 0], [0, 0], [1, 0]])?;
    let mut max_gap: f64 = 0.0;
    let mut mismatches = 0;
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(case as u64);
        let coeffs = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..3).map(|_| rng.random_range(-2.0..2.0)).collect() };
        let f = ConvolutionCoupling::from_cosine(grid, &coeffs(&mut rng), rng.random_range(-1.0..1.0))?;
        let g = ConvolutionCoupling::from_cosine(grid, &coeffs(&mut rng), rng.random_range(-1.0..1.0))?;
        let drift = DriftField::from_samples(grid, (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())?;
        let slices = (0..time.nodes()).map(|_| random_density(grid, &mut rng)).collect::<Result<Vec<_>>>()?;
        let belief = DensityFlow::from_slices(time, &slices)?;
        let problem = FirstOrderProblem::new(
            ProbabilityVector::uniform(grid),
            QuadraticHamiltonian::new(drift),
            f,
            g,
            time,
            Some(1),
            PlayConfig::default(),
        )?
        .with_controls(controls.clone())?;
        let br = bellman_best_response(&problem, &belief)?;
        for start in 0..grid.cells() {
            let (value, traj) = oracles::enumerate_best_response(&problem, &belief, start)?;
            max_gap = max_gap.max((br.value().slice(0)[start] - value).abs());
            if br.trajectory(start, &problem.controls) != traj {
                mismatches += 1;
            }
        }
    }
    Ok(OracleSweep { cases, max_gap, mismatches })
}

/// Circle d1 formula against the transport network on random 1D pairs.
pub fn d1_sweep(pairs: usize, points: usize, seed: u64) -> Result<OracleSweep> {
    let grid = TorusGrid::line(points)?;
    let mut max_gap: f64 = 0.0;
    for i in 0..pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (mu, nu) = (random_density(grid, &mut rng)?, random_density(grid, &mut rng)?);
        max_gap = max_gap.max((d1_distance(&mu, &nu)? - d1_distance_lp(&mu, &nu)?).abs());
    }
    Ok(OracleSweep { cases: pairs, max_gap, mismatches: 0 })
}

/// Closed-form conjugate against the zooming grid search, with random drifts in 1D and 2D.
pub fn legendre_sweep(samples: usize, seed: u64) -> Result<OracleSweep> {
    let mut max_gap: f64 = 0.0;
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let dim = 1 + i % 2;
        let grid = TorusGrid::new(dim, 4)?;
        let drift = DriftField::from_samples(grid, (0..grid.cells() * dim).map(|_| rng.random_range(-2.0..2.0)).collect())?;
        let ham = QuadraticHamiltonian::new(drift);
        let cell = rng.random_range(0..grid.cells());
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let searched = oracles::legendre_grid_search(&ham, cell, &q, 10.0);
        max_gap = max_gap.max((ham.legendre(cell, &q) - searched).abs());
    }
    Ok(OracleSweep { cases: samples, max_gap, mismatches: 0 })
}

/// A named pass/fail check with a short description of the observed values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// The analytic fixtures of the Cesaro diagnostics: `1/n`, constant `1`, and `n^-1.5`.
pub fn cesaro_fixtures() -> Result<Vec<Check>> {
    let n = 10_000;
    let harmonic: Vec<f64> = (1..=n).map(|k| 1.0 / k as f64).collect();
    let h = cesaro_check(&harmonic, None, DEFAULT_TAIL_FRACTION)?;
    let basel = PI * PI / 6.0;
    let weighted = *h.weighted_sums.last().expect("nonempty");
    let constant = cesaro_check(&vec![1.0; n], None, DEFAULT_TAIL_FRACTION)?;
    let fast: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-1.5)).collect();
    let f = cesaro_check(&fast, None, DEFAULT_TAIL_FRACTION)?;
    let shrinking = (100..=n).all(|m| f.cesaro[m - 1] < f.cesaro[m / 2 - 1]);
    Ok(vec![
        Check::new(
            "harmonic",
            h.cesaro_final() <= 1e-3 && weighted <= basel + 1e-6 && h.summable,
            format!("cesaro {:.3e}, sum a_n/n {weighted:.9} vs {basel:.9}", h.cesaro_final()),
        ),
        Check::new(
            "constant",
            constant.cesaro_final() == 1.0 && !constant.summable,
            format!("cesaro {}, tail share {:.3}", constant.cesaro_final(), constant.tail_fraction),
        ),
        Check::new(
            "power 1.5",
            f.summable && shrinking,
            format!("cesaro {:.3e}, tail share {:.2e}", f.cesaro_final(), f.tail_fraction),
        ),
    ])
}
