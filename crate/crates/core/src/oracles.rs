//! Slow reference implementations used to cross-check the fast paths:
//! exhaustive trajectory enumeration, direct convolution, complete bipartite
//! transport and a zooming grid search for the convex conjugate.

use crate::error::Result;
use crate::geometry::{DensityFlow, MinCostFlow, TorusGrid};
use crate::hamiltonian::QuadraticHamiltonian;
use crate::trajectory::{CouplingFields, FirstOrderProblem, Trajectory};

/// Every control sequence from `start`, in lexicographic order of move indices.
pub fn all_trajectories(problem: &FirstOrderProblem, start: usize) -> Vec<Trajectory> {
    let steps = problem.time.steps();
    let moves = problem.controls.moves();
    let count = moves.len().pow(steps as u32);
    (0..count)
        .map(|mut code| {
            let mut seq = vec![[0i32; 2]; steps];
            for k in (0..steps).rev() {
                seq[k] = moves[code % moves.len()];
                code /= moves.len();
            }
            Trajectory::from_moves(problem.grid(), start, &seq)
        })
        .collect()
}

/// Cheapest trajectory from `start` by enumeration; the first minimizer in
/// lexicographic order wins ties.
pub fn enumerate_best_response(problem: &FirstOrderProblem, m: &DensityFlow, start: usize) -> Result<(f64, Trajectory)> {
    let fields = problem.fields(m)?;
    let mut best: Option<(f64, Trajectory)> = None;
    for traj in all_trajectories(problem, start) {
        let cost = problem.cost_with(&traj, &fields)?;
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, traj));
        }
    }
    Ok(best.expect("control set is non-empty"))
}

/// Time marginals of a finite curve measure `sum_i w_i delta_{gamma_i}`.
pub fn curve_marginals(problem: &FirstOrderProblem, curves: &[(f64, Trajectory)]) -> DensityFlow {
    let grid = *problem.grid();
    let slices: Vec<_> = (0..problem.time.nodes())
        .map(|k| {
            let mut w = vec![0.0; grid.cells()];
            for (weight, traj) in curves {
                w[traj.cells()[k]] += weight / grid.cell_volume();
            }
            crate::geometry::ProbabilityVector::normalized(grid, w).expect("positive weights")
        })
        .collect();
    DensityFlow::from_slices(problem.time, &slices).expect("aligned slices")
}

/// Both terms of the exploitability of a finite curve measure, by brute force:
/// `(int J d eta, min over strategy assignments of int J d theta)`. The minimum
/// runs over every joint choice of one trajectory per starting cell.
pub fn exhaustive_exploitability(problem: &FirstOrderProblem, curves: &[(f64, Trajectory)]) -> Result<(f64, f64)> {
    let belief = curve_marginals(problem, curves);
    let fields: CouplingFields = problem.fields(&belief)?;
    let mut expected = 0.0;
    for (w, traj) in curves {
        expected += w * problem.cost_with(traj, &fields)?;
    }
    let grid = *problem.grid();
    let vol = grid.cell_volume();
    let starts: Vec<usize> = (0..grid.cells()).filter(|c| problem.m0.as_slice()[*c] > 0.0).collect();
    let options: Vec<Vec<f64>> = starts
        .iter()
        .map(|s| {
            all_trajectories(problem, *s)
                .iter()
                .map(|t| problem.cost_with(t, &fields))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut best = f64::INFINITY;
    let mut choice = vec![0usize; starts.len()];
    loop {
        let total: f64 = starts
            .iter()
            .zip(&choice)
            .zip(&options)
            .map(|((s, i), costs)| problem.m0.as_slice()[*s] * vol * costs[*i])
            .sum();
        best = best.min(total);
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                return Ok((expected, best));
            }
            choice[pos] += 1;
            if choice[pos] < options[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// `(rho * m)(x) + offset` by the double loop over cells.
pub fn naive_convolution(grid: &TorusGrid, kernel: &[f64], offset: f64, density: &[f64]) -> Vec<f64> {
    (0..grid.cells())
        .map(|x| {
            let s: f64 = density
                .iter()
                .enumerate()
                .map(|(y, m)| {
                    let mut d = [0usize; 2];
                    for (axis, di) in d.iter_mut().enumerate().take(grid.dim()) {
                        let off = grid.coords(x)[axis] as isize - grid.coords(y)[axis] as isize;
                        *di = off.rem_euclid(grid.points() as isize) as usize;
                    }
                    kernel[grid.cell_at(d)] * m
                })
                .sum();
            s * grid.cell_volume() + offset
        })
        .collect()
}

/// W1 through the complete bipartite transportation problem with wrapped-L1
/// costs between every pair of cells. Quadratic in the cell count.
pub fn bipartite_transport(grid: &TorusGrid, mu: &[f64], nu: &[f64]) -> f64 {
    let n = grid.cells();
    let vol = grid.cell_volume();
    let mut net = MinCostFlow::new(2 * n);
    for a in 0..n {
        for b in 0..n {
            net.add_arc(a, n + b, grid.torus_l1(a, b));
        }
    }
    let mut supply = vec![0.0; 2 * n];
    for c in 0..n {
        supply[c] = mu[c] * vol;
        supply[n + c] = -nu[c] * vol;
    }
    net.solve(&supply)
}

/// `sup_p <p, q> - H(x, p)` by a grid search on `[-radius, radius]^dim` that
/// repeatedly zooms around the best node. Uses only evaluations of `H`.
pub fn legendre_grid_search(ham: &QuadraticHamiltonian, cell: usize, q: &[f64], radius: f64) -> f64 {
    let dim = q.len();
    let objective = |p: &[f64]| -> f64 { p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() - ham.eval(cell, p) };
    let per_axis = 41usize;
    let mut center = vec![0.0; dim];
    let mut half = radius;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..40 {
        let step = 2.0 * half / (per_axis - 1) as f64;
        let mut arg = center.clone();
        let total = per_axis.pow(dim as u32);
        let mut p = vec![0.0; dim];
        for code in 0..total {
            let mut c = code;
            for (i, pi) in p.iter_mut().enumerate() {
                *pi = center[i] - half + step * (c % per_axis) as f64;
                c /= per_axis;
            }
            let v = objective(&p);
            if v > best {
                best = v;
                arg.copy_from_slice(&p);
            }
        }
        center = arg;
        half = 2.0 * step;
    }
    best
}
