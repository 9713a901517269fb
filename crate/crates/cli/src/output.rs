//! CSV and JSON writers. Every float is written in Rust's shortest
//! round-trip scientific notation, so reruns produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fplay_core::geometry::{DensityFlow, TorusGrid};
use fplay_core::report::IterationRecord;
use fplay_core::trajectory::Trajectory;
use serde::Serialize;

use crate::CliError;

pub const ITERATIONS_FILE: &str = "iterations.csv";
pub const DENSITY_FILE: &str = "density_final.csv";
pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const REPORT_FILE: &str = "report.json";
pub const ITERATIONS_HEADER: &str = "n,phi,a_n,du_inf,dgrad_inf,dm_inf,dw_inf,residual_hjb,residual_fp";

pub fn num(v: f64) -> Result<String, CliError> {
    if !v.is_finite() {
        return Err(CliError::Output(format!("refusing to write non-finite value {v}")));
    }
    Ok(format!("{v:e}"))
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn iterations_csv(records: &[IterationRecord]) -> Result<String, CliError> {
    let mut out = String::from(ITERATIONS_HEADER);
    out.push('\n');
    for r in records {
        let fields = [r.phi, r.a_n, r.du_inf, r.dgrad_inf, r.dm_inf, r.dw_inf, r.residual_hjb, r.residual_fp];
        let cols = fields.iter().map(|v| num(*v)).collect::<Result<Vec<_>, _>>()?;
        writeln!(out, "{},{}", r.n, cols.join(",")).expect("writing to a string");
    }
    Ok(out)
}

/// Time nodes written for a flow with `steps` intervals: every `stride`-th
/// node plus the last, with `stride = ceil(steps / (max_slices - 1))`.
pub fn slice_indices(steps: usize, max_slices: usize) -> Vec<usize> {
    let stride = if max_slices <= 1 { steps.max(1) } else { steps.div_ceil(max_slices - 1).max(1) };
    let mut ks: Vec<usize> = (0..=steps).step_by(stride).collect();
    if ks.last() != Some(&steps) {
        ks.push(steps);
    }
    ks
}

/// `t,x,m` (1D) or `t,x,y,m` (2D), slices in time order, cells in storage order.
pub fn density_csv(flow: &DensityFlow, slices: &[usize]) -> Result<String, CliError> {
    let grid = *flow.grid();
    let mut out = String::from(if grid.dim() == 1 { "t,x,m\n" } else { "t,x,y,m\n" });
    for &k in slices {
        let t = num(flow.time().t(k))?;
        for (c, m) in flow.slice(k).iter().enumerate() {
            out.push_str(&t);
            for axis in 0..grid.dim() {
                out.push(',');
                out.push_str(&num(grid.position(c, axis))?);
            }
            out.push(',');
            out.push_str(&num(*m)?);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Moves of a trajectory: `;` between steps, `:` between axes.
pub fn move_string(grid: &TorusGrid, traj: &Trajectory) -> String {
    traj.moves(grid)
        .iter()
        .map(|m| m[..grid.dim()].iter().map(|j| j.to_string()).collect::<Vec<_>>().join(":"))
        .collect::<Vec<_>>()
        .join(";")
}

/// `start,moves` per starting cell, or `player,start,moves` when labelled.
pub fn trajectories_csv(grid: &TorusGrid, trajectories: &[Trajectory], players: bool) -> String {
    let mut out = String::from(if players { "player,start,moves\n" } else { "start,moves\n" });
    for (i, t) in trajectories.iter().enumerate() {
        if players {
            write!(out, "{i},").expect("writing to a string");
        }
        writeln!(out, "{},{}", t.start(), move_string(grid, t)).expect("writing to a string");
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_selection_keeps_both_ends() {
        assert_eq!(slice_indices(4, 257), vec![0, 1, 2, 3, 4]);
        assert_eq!(slice_indices(10, 4), vec![0, 4, 8, 10]);
        assert_eq!(slice_indices(9, 4), vec![0, 3, 6, 9]);
        assert_eq!(slice_indices(5, 1), vec![0, 5]);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -2.5e-13, 1.0 / 3.0] {
            assert_eq!(num(v).unwrap().parse::<f64>().unwrap(), v);
        }
        assert!(num(f64::NAN).is_err());
    }
}
