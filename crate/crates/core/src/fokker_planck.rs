//! Forward explicit solve of the Fokker-Planck equation
//! `dm/dt - lap m - div(m d_p H(x, grad u)) = 0` and its flux `w = -m d_p H`.
//!
//! The update is `m_{k+1} = m_k + dt [(1 + theta h/2) lap m_k - div_c w_k]`,
//! i.e. a conservative finite-volume step with the Lax-Friedrichs face flux
//! `(w_i + w_{i+1})/2 - theta/2 (m_{i+1} - m_i)`. It is linear in `(m, w)`,
//! so averages of solver outputs satisfy the same discrete equation.

use crate::error::{Error, Result};
use crate::geometry::{DensityFlow, ProbabilityVector, ScalarFlow, VectorFlow};
use crate::hamiltonian::QuadraticHamiltonian;
use crate::hjb::{drift_flow, HjbScheme};
use crate::par::Exec;
use crate::stencil::Stencil;

/// Entries below this are reported as a positivity failure.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-13;

/// Advances raw initial weights under a frozen drift field `a = d_p H`.
/// No normalization or sign check, so the map is exactly linear in `m0`.
pub fn fp_forward(m0: &[f64], drift: &VectorFlow, scheme: &HjbScheme, exec: Exec) -> Result<(DensityFlow, VectorFlow)> {
    let grid = *drift.grid();
    let time = *drift.time();
    scheme.check_cfl(&grid, &time)?;
    let cells = grid.cells();
    if m0.len() != cells {
        return Err(Error::Dimension(format!("initial density has {} cells, grid has {cells}", m0.len())));
    }
    let dim = grid.dim();
    let stencil = Stencil::new(&grid);
    let dt = time.dt();
    let visc = 1.0 + 0.5 * scheme.theta() * grid.h();
    let mut m = DensityFlow::zeros(grid, time);
    let mut w = VectorFlow::zeros(grid, time);
    m.slice_mut(0).copy_from_slice(m0);
    for k in 0..=time.steps() {
        let a = drift.slice(k);
        {
            let mk = m.slice(k);
            let wk = w.slice_mut(k);
            for c in 0..cells {
                for i in 0..dim {
                    wk[c * dim + i] = -mk[c] * a[c * dim + i];
                }
            }
        }
        if k == time.steps() {
            break;
        }
        let values = m.values_mut();
        let (head, tail) = values.split_at_mut((k + 1) * cells);
        let cur = &head[k * cells..];
        let next = &mut tail[..cells];
        let wk = w.slice(k);
        exec.fill_cells(next, |c| cur[c] + dt * (visc * stencil.laplacian(cur, c) - stencil.divergence(wk, c)));
    }
    m.check_finite()?;
    Ok((m, w))
}

/// Density flow and flux driven by the optimal drift of `u`, started at `m0`.
pub fn solve_fp_forward(
    u: &ScalarFlow,
    m0: &ProbabilityVector,
    ham: &QuadraticHamiltonian,
    scheme: &HjbScheme,
    exec: Exec,
) -> Result<(DensityFlow, VectorFlow)> {
    u.grid().check_same(m0.grid())?;
    let drift = drift_flow(u, ham, exec)?;
    scheme.check_drift(&drift)?;
    let (m, w) = fp_forward(m0.as_slice(), &drift, scheme, exec)?;
    let low = m.min_value();
    if low < -NEGATIVITY_TOLERANCE {
        return Err(Error::Scheme(format!("density became negative ({low})")));
    }
    Ok((m, w))
}

/// Largest per-step defect `|m_{k+1} - m_k - dt [(1 + theta h/2) lap m_k - div_c w_k]|`
/// over all steps; zero up to rounding for solver outputs and their averages.
pub fn continuity_residual(m: &DensityFlow, w: &VectorFlow, scheme: &HjbScheme) -> Result<f64> {
    m.grid().check_same(w.grid())?;
    m.time().check_same(w.time())?;
    let grid = *m.grid();
    let stencil = Stencil::new(&grid);
    let dt = m.time().dt();
    let visc = 1.0 + 0.5 * scheme.theta() * grid.h();
    let mut worst: f64 = 0.0;
    for k in 0..m.time().steps() {
        let (cur, next, wk) = (m.slice(k), m.slice(k + 1), w.slice(k));
        for c in 0..grid.cells() {
            let step = dt * (visc * stencil.laplacian(cur, c) - stencil.divergence(wk, c));
            worst = worst.max((next[c] - cur[c] - step).abs());
        }
    }
    Ok(worst)
}

/// Rate-form defect of `m` as a solution of the FP equation driven by `u`:
/// the per-step continuity defect with `w = -m d_p H(grad u)`, divided by `dt`,
/// plus the mismatch of the initial slice with `m0`.
pub fn fp_residual(
    m: &DensityFlow,
    u: &ScalarFlow,
    m0: &ProbabilityVector,
    ham: &QuadraticHamiltonian,
    scheme: &HjbScheme,
    exec: Exec,
) -> Result<f64> {
    m.grid().check_same(u.grid())?;
    m.time().check_same(u.time())?;
    let drift = drift_flow(u, ham, exec)?;
    let dim = m.grid().dim();
    let mut w = VectorFlow::zeros(*m.grid(), *m.time());
    for k in 0..m.time().nodes() {
        let (mk, a) = (m.slice(k), drift.slice(k));
        for (i, wi) in w.slice_mut(k).iter_mut().enumerate() {
            *wi = -mk[i / dim] * a[i];
        }
    }
    let start = m
        .slice(0)
        .iter()
        .zip(m0.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((continuity_residual(m, &w, scheme)? / m.time().dt()).max(start))
}

/// Per-slice maximum density.
pub fn linf_track(m: &DensityFlow) -> Vec<f64> {
    (0..m.time().nodes())
        .map(|k| m.slice(k).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}
