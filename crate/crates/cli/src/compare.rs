//! Distance between the final beliefs of two completed runs.

use std::path::Path;

use fplay_core::geometry::{d1_distance, ProbabilityVector, TorusGrid};
use serde::{Deserialize, Serialize};

use crate::output::{DENSITY_FILE, REPORT_FILE};
use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
struct GridHeader {
    dim: usize,
    points: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct ReportHeader {
    grid: GridHeader,
}

/// Time stamps and density slices read back from a run directory.
struct WrittenFlow {
    grid: TorusGrid,
    times: Vec<String>,
    slices: Vec<Vec<f64>>,
}

fn read(dir: &Path, name: &str) -> Result<String, CliError> {
    let path = dir.join(name);
    std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load(dir: &Path) -> Result<WrittenFlow, CliError> {
    let header: ReportHeader = serde_json::from_str(&read(dir, REPORT_FILE)?)
        .map_err(|e| CliError::Output(format!("{}: {e}", dir.join(REPORT_FILE).display())))?;
    let grid = TorusGrid::new(header.grid.dim, header.grid.points)?;
    let text = read(dir, DENSITY_FILE)?;
    let mut times: Vec<String> = Vec::new();
    let mut slices: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Output(format!("{DENSITY_FILE} line {}: malformed row", line_no + 1));
        if cols.len() != grid.dim() + 2 {
            return Err(bad());
        }
        let m: f64 = cols[cols.len() - 1].parse().map_err(|_| bad())?;
        if times.last().map(String::as_str) != Some(cols[0]) {
            times.push(cols[0].to_string());
            slices.push(Vec::with_capacity(grid.cells()));
        }
        slices.last_mut().expect("slice opened").push(m);
    }
    if slices.is_empty() || slices.iter().any(|s| s.len() != grid.cells()) {
        return Err(CliError::Output(format!("{}: incomplete density slices", dir.display())));
    }
    Ok(WrittenFlow { grid, times, slices })
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub sup_t_d1: f64,
    pub per_slice: Vec<f64>,
}

/// `sup_t d1` over the time slices written by both runs.
pub fn compare_dirs(a: &Path, b: &Path) -> Result<Comparison, CliError> {
    let (fa, fb) = (load(a)?, load(b)?);
    if fa.grid != fb.grid {
        return Err(CliError::Config(format!(
            "grids differ: {}x{} vs {}x{}",
            fa.grid.dim(),
            fa.grid.points(),
            fb.grid.dim(),
            fb.grid.points()
        )));
    }
    if fa.times != fb.times {
        return Err(CliError::Config("runs wrote different time slices".into()));
    }
    let per_slice = fa
        .slices
        .iter()
        .zip(&fb.slices)
        .map(|(x, y)| {
            let px = ProbabilityVector::normalized(fa.grid, x.clone())?;
            let py = ProbabilityVector::normalized(fa.grid, y.clone())?;
            Ok(d1_distance(&px, &py)?)
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    Ok(Comparison { sup_t_d1: per_slice.iter().copied().fold(0.0, f64::max), per_slice })
}
