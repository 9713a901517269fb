//! Finite-population fictitious play: the first-order loop started from the
//! empirical measure of N players placed on grid cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{d1_distance, sup_t_d1_with, ProbabilityVector, TorusGrid};
use crate::par::Exec;
use crate::report::PlayReport;
use crate::trajectory::{run_first_order, FirstOrderOutcome, FirstOrderProblem, StrategyState, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Placement {
    /// Players at the `i/(N+1)` quantiles of the initial density (per axis in 2D).
    Quantile,
    /// Independent draws from the initial density.
    Iid { seed: u64 },
}

/// Starting cells of N players and their empirical measure.
#[derive(Debug, Clone)]
pub struct PlayerSet {
    cells: Vec<usize>,
    empirical: ProbabilityVector,
    d1_to_m0: f64,
}

impl PlayerSet {
    pub fn from_cells(m0: &ProbabilityVector, cells: Vec<usize>) -> Result<Self> {
        let grid = *m0.grid();
        if cells.is_empty() {
            return Err(Error::Validation("need at least one player".into()));
        }
        let mut counts = vec![0.0; grid.cells()];
        for c in &cells {
            if *c >= grid.cells() {
                return Err(Error::Validation(format!("player cell {c} outside the grid")));
            }
            counts[*c] += 1.0;
        }
        let empirical = ProbabilityVector::normalized(grid, counts)?;
        let d1_to_m0 = d1_distance(&empirical, m0)?;
        Ok(Self { cells, empirical, d1_to_m0 })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// `(1/N) sum_i delta_{x_i}` as a grid density.
    pub fn empirical(&self) -> &ProbabilityVector {
        &self.empirical
    }

    pub fn d1_to_m0(&self) -> f64 {
        self.d1_to_m0
    }
}

/// Smallest index whose cumulative mass reaches `q`.
fn inverse_cdf(cdf: &[f64], q: f64) -> usize {
    cdf.iter().position(|c| *c >= q - 1e-12).unwrap_or(cdf.len() - 1)
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

pub fn place_players(m0: &ProbabilityVector, n: usize, placement: Placement) -> Result<PlayerSet> {
    if n == 0 {
        return Err(Error::Validation("need at least one player".into()));
    }
    let grid = *m0.grid();
    let vol = grid.cell_volume();
    let cells = match placement {
        Placement::Quantile => match grid.dim() {
            1 => {
                let cdf = cumulative(m0.as_slice().iter().map(|w| w * vol));
                (1..=n).map(|i| inverse_cdf(&cdf, i as f64 / (n as f64 + 1.0))).collect()
            }
            _ => product_quantiles(m0, &grid, n)?,
        },
        Placement::Iid { seed } => {
            let cdf = cumulative(m0.as_slice().iter().map(|w| w * vol));
            (0..n)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    inverse_cdf(&cdf, rng.random::<f64>())
                })
                .collect()
        }
    };
    PlayerSet::from_cells(m0, cells)
}

fn product_quantiles(m0: &ProbabilityVector, grid: &TorusGrid, n: usize) -> Result<Vec<usize>> {
    let r = (n as f64).sqrt().round() as usize;
    if r * r != n {
        return Err(Error::Config(format!("2D quantile placement needs a square player count, got {n}")));
    }
    let p = grid.points();
    let vol = grid.cell_volume();
    let marginal = |axis: usize| -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (c, w) in m0.as_slice().iter().enumerate() {
            out[grid.coords(c)[axis]] += w * vol;
        }
        cumulative(out.into_iter())
    };
    let (cx, cy) = (marginal(0), marginal(1));
    let q = |i: usize| i as f64 / (r as f64 + 1.0);
    let mut cells = Vec::with_capacity(n);
    for b in 1..=r {
        for a in 1..=r {
            cells.push(grid.cell_at([inverse_cdf(&cx, q(a)), inverse_cdf(&cy, q(b))]));
        }
    }
    Ok(cells)
}

/// Outcome of an N-player run.
#[derive(Debug, Clone)]
pub struct NPlayerOutcome {
    pub outcome: FirstOrderOutcome,
    /// Final optimal trajectory of each player.
    pub trajectories: Vec<Trajectory>,
}

pub fn run_nplayer(problem: &FirstOrderProblem, players: &PlayerSet) -> Result<NPlayerOutcome> {
    let problem = problem.clone().with_m0(players.empirical().clone())?;
    let outcome = run_first_order(&problem, StrategyState::new(&problem))?;
    let trajectories = players
        .cells()
        .iter()
        .map(|c| outcome.response.trajectory(*c, &problem.controls))
        .collect();
    Ok(NPlayerOutcome { outcome, trajectories })
}

/// `sup_t d1` between the final beliefs of two runs on the same grids.
pub fn compare_to_mfg(nplayer: &PlayReport, mfg: &PlayReport, exec: Exec) -> Result<f64> {
    sup_t_d1_with(exec, &nplayer.belief, &mfg.belief)
        .map_err(|e| Error::Config(format!("runs are not comparable: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_quantiles() {
        let g = TorusGrid::line(64).unwrap();
        let uni = ProbabilityVector::uniform(g);
        let ps = place_players(&uni, 4, Placement::Quantile).unwrap();
        for (c, q) in ps.cells().iter().zip([0.2, 0.4, 0.6, 0.8]) {
            assert!((g.position(*c, 0) - q).abs() <= g.h());
        }
        let one = place_players(&uni, 1, Placement::Quantile).unwrap();
        assert!((g.position(one.cells()[0], 0) - 0.5).abs() <= g.h());
        assert!(place_players(&uni, 0, Placement::Quantile).is_err());
    }

    #[test]
    fn empirical_measure_has_unit_mass() {
        let g = TorusGrid::line(32).unwrap();
        let uni = ProbabilityVector::uniform(g);
        for n in [1, 3, 7, 40] {
            let ps = place_players(&uni, n, Placement::Iid { seed: 9 }).unwrap();
            assert!((ps.empirical().mass() - 1.0).abs() < 1e-13);
            assert_eq!(ps.len(), n);
        }
    }

    #[test]
    fn iid_placement_is_reproducible() {
        let g = TorusGrid::line(32).unwrap();
        let m = ProbabilityVector::from_fn(g, |x| 1.0 + x[0]).unwrap();
        let a = place_players(&m, 50, Placement::Iid { seed: 3 }).unwrap();
        let b = place_players(&m, 50, Placement::Iid { seed: 3 }).unwrap();
        let c = place_players(&m, 50, Placement::Iid { seed: 4 }).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert_ne!(a.cells(), c.cells());
    }

    #[test]
    fn product_quantiles_in_2d() {
        let g = TorusGrid::new(2, 8).unwrap();
        let uni = ProbabilityVector::uniform(g);
        let ps = place_players(&uni, 9, Placement::Quantile).unwrap();
        assert_eq!(ps.len(), 9);
        assert!(place_players(&uni, 8, Placement::Quantile).is_err());
    }
}
