//! The quadratic-shifted Hamiltonian `H(x, p) = |p|^2 / 2 + <b(x), p>`, its
//! convex conjugate and the associated Lagrangian.
//!
//! For this family `D^2_pp H = I`, so the uniform convexity bounds hold with
//! both constants equal to one and every conjugate quantity is closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TorusGrid;
use crate::par::Exec;

/// Upper convexity constant of `D^2_pp H`.
pub const CONVEXITY_UPPER: f64 = 1.0;

/// Fourier description of one drift component as a function of its own axis:
/// `b_i(x) = mean + sum_k cos[k] cos(2 pi (k+1) x_i) + sin[k] sin(2 pi (k+1) x_i)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DriftModes {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl DriftModes {
    fn eval(&self, x: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let c: f64 = self
            .cos
            .iter()
            .enumerate()
            .map(|(k, a)| a * (tau * (k + 1) as f64 * x).cos())
            .sum();
        let s: f64 = self
            .sin
            .iter()
            .enumerate()
            .map(|(k, a)| a * (tau * (k + 1) as f64 * x).sin())
            .sum();
        self.mean + c + s
    }
}

/// Periodic drift field `b` sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl DriftField {
    pub fn zero(grid: TorusGrid) -> Self {
        Self { grid, values: vec![0.0; grid.cells() * grid.dim()] }
    }

    /// One set of modes per axis.
    pub fn from_modes(grid: TorusGrid, modes: &[DriftModes]) -> Result<Self> {
        if modes.len() != grid.dim() {
            return Err(Error::Dimension(format!(
                "drift needs {} components, got {}",
                grid.dim(),
                modes.len()
            )));
        }
        let mut values = Vec::with_capacity(grid.cells() * grid.dim());
        for c in 0..grid.cells() {
            for (axis, m) in modes.iter().enumerate() {
                values.push(m.eval(grid.position(c, axis)));
            }
        }
        Self::from_samples(grid, values)
    }

    /// Explicit samples, components interleaved per cell.
    pub fn from_samples(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() * grid.dim() {
            return Err(Error::Dimension(format!(
                "drift needs {} samples, got {}",
                grid.cells() * grid.dim(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("drift samples must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, cell: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[cell * d..(cell + 1) * d]
    }

    pub fn sup_norm(&self) -> f64 {
        let d = self.grid.dim();
        self.values
            .chunks(d)
            .map(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// `H(x, p) = |p|^2 / 2 + <b(x), p>`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticHamiltonian {
    drift: DriftField,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

impl QuadraticHamiltonian {
    pub fn new(drift: DriftField) -> Self {
        Self { drift }
    }

    pub fn free(grid: TorusGrid) -> Self {
        Self::new(DriftField::zero(grid))
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn grid(&self) -> &TorusGrid {
        self.drift.grid()
    }

    #[inline]
    pub fn eval(&self, cell: usize, p: &[f64]) -> f64 {
        0.5 * norm2(p) + dot(self.drift.at(cell), p)
    }

    /// `D_p H(x, p) = p + b(x)`, written into `out`.
    #[inline]
    pub fn grad_p_into(&self, cell: usize, p: &[f64], out: &mut [f64]) {
        for ((o, pi), bi) in out.iter_mut().zip(p).zip(self.drift.at(cell)) {
            *o = pi + bi;
        }
    }

    pub fn grad_p(&self, cell: usize, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.grad_p_into(cell, p, &mut out);
        out
    }

    /// Convex conjugate `H*(x, q) = |q - b(x)|^2 / 2`.
    #[inline]
    pub fn legendre(&self, cell: usize, q: &[f64]) -> f64 {
        0.5 * q
            .iter()
            .zip(self.drift.at(cell))
            .map(|(qi, bi)| (qi - bi) * (qi - bi))
            .sum::<f64>()
    }

    /// The maximizer of `<p, q> - H(x, p)`: the unique `p` with `D_p H(x, p) = q`.
    pub fn p_hat(&self, cell: usize, q: &[f64]) -> Vec<f64> {
        q.iter().zip(self.drift.at(cell)).map(|(qi, bi)| qi - bi).collect()
    }

    /// `H(x,p) + H*(x,q) - <p,q> - |q - D_p H(x,p)|^2 / (2 C)`; nonnegative.
    pub fn convexity_slack(&self, cell: usize, p: &[f64], q: &[f64]) -> f64 {
        let lhs = self.eval(cell, p) + self.legendre(cell, q) - dot(p, q);
        let gap: f64 = q
            .iter()
            .zip(p)
            .zip(self.drift.at(cell))
            .map(|((qi, pi), bi)| (qi - pi - bi).powi(2))
            .sum();
        lhs - gap / (2.0 * CONVEXITY_UPPER)
    }

    /// Running cost of moving with velocity `v`: `L(x, v) = H*(x, -v)`.
    #[inline]
    pub fn lagrangian(&self, cell: usize, v: &[f64]) -> f64 {
        0.5 * v
            .iter()
            .zip(self.drift.at(cell))
            .map(|(vi, bi)| (vi + bi) * (vi + bi))
            .sum::<f64>()
    }
}

/// Outcome of a randomized sweep of the strong-convexity inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub samples: usize,
    pub min_slack: f64,
}

/// Samples random `(x, p, q)` with `|p|, |q| <= radius` and records the
/// smallest slack. Sample `i` uses stream `i` of the seeded generator.
pub fn convexity_sweep(h: &QuadraticHamiltonian, samples: usize, radius: f64, seed: u64, exec: Exec) -> ConvexityReport {
    let grid = *h.grid();
    let dim = grid.dim();
    let slacks = exec.map(samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let cell = rng.random_range(0..grid.cells());
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..radius)).collect();
        h.convexity_slack(cell, &p, &q)
    });
    ConvexityReport {
        samples,
        min_slack: slacks.into_iter().fold(f64::INFINITY, f64::min),
    }
}
