//! Nonlocal couplings `f(x, m) = (rho * m)(x) + offset` with a symmetric
//! periodic kernel, their potentials, and black-box structure checks.
//!
//! Symmetry of the kernel makes `f` the measure derivative of
//! `F(m) = <rho * m, m> / 2 + offset`; nonnegative Fourier coefficients of
//! `rho` make it monotone.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::{DensityFlow, ProbabilityVector, ScalarFlow, TorusGrid};
use crate::par::Exec;

/// A map `m -> f(., m)` from grid densities to grid fields.
pub trait Coupling: Send + Sync {
    fn grid(&self) -> &TorusGrid;

    /// Writes `f(., density)` into `out`; `density` has one entry per cell.
    fn eval_into(&self, density: &[f64], out: &mut [f64]);

    fn eval(&self, m: &ProbabilityVector) -> Result<Vec<f64>> {
        self.grid().check_same(m.grid())?;
        let mut out = vec![0.0; m.grid().cells()];
        self.eval_into(m.as_slice(), &mut out);
        Ok(out)
    }
}

/// Mode tables for the cosine-series fast path.
#[derive(Debug, Clone, PartialEq)]
struct CosineModes {
    coeffs: Vec<f64>,
    // cos/sin(2 pi k x_axis) for k >= 1, laid out [k-1][axis][cell]
    cos: Vec<f64>,
    sin: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionCoupling {
    grid: TorusGrid,
    /// `rho` at each displacement cell.
    kernel: Vec<f64>,
    offset: f64,
    modes: Option<CosineModes>,
}

impl ConvolutionCoupling {
    /// `rho(z) = c[0] + sum_{k>=1} c[k] sum_i cos(2 pi k z_i)`.
    pub fn from_cosine(grid: TorusGrid, coeffs: &[f64], offset: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Validation("cosine kernel needs at least one coefficient".into()));
        }
        if coeffs.iter().chain([&offset]).any(|c| !c.is_finite()) {
            return Err(Error::Validation("kernel coefficients must be finite".into()));
        }
        let cells = grid.cells();
        let dim = grid.dim();
        let kernel = (0..cells)
            .map(|d| {
                coeffs[0]
                    + coeffs
                        .iter()
                        .enumerate()
                        .skip(1)
                        .map(|(k, c)| c * (0..dim).map(|i| (TAU * k as f64 * grid.position(d, i)).cos()).sum::<f64>())
                        .sum::<f64>()
            })
            .collect();
        let modes = coeffs.len() - 1;
        let mut cos = Vec::with_capacity(modes * dim * cells);
        let mut sin = Vec::with_capacity(modes * dim * cells);
        for k in 1..=modes {
            for axis in 0..dim {
                for c in 0..cells {
                    let a = TAU * k as f64 * grid.position(c, axis);
                    cos.push(a.cos());
                    sin.push(a.sin());
                }
            }
        }
        Ok(Self {
            grid,
            kernel,
            offset,
            modes: Some(CosineModes { coeffs: coeffs.to_vec(), cos, sin }),
        })
    }

    /// Kernel given by its values at each displacement cell; must be even.
    pub fn from_samples(grid: TorusGrid, kernel: Vec<f64>, offset: f64) -> Result<Self> {
        if kernel.len() != grid.cells() {
            return Err(Error::Dimension(format!("kernel needs {} samples, got {}", grid.cells(), kernel.len())));
        }
        if kernel.iter().chain([&offset]).any(|c| !c.is_finite()) {
            return Err(Error::Validation("kernel samples must be finite".into()));
        }
        for d in 0..grid.cells() {
            let neg = negate(&grid, d);
            if (kernel[d] - kernel[neg]).abs() > 1e-12 * (1.0 + kernel[d].abs()) {
                return Err(Error::Validation(format!("kernel is not symmetric at displacement cell {d}")));
            }
        }
        Ok(Self { grid, kernel, offset, modes: None })
    }

    /// `f = offset`, independent of `m`.
    pub fn constant(grid: TorusGrid, offset: f64) -> Self {
        Self { grid, kernel: vec![0.0; grid.cells()], offset, modes: None }
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Whether `f(., m)` is the same field for every `m`.
    pub fn is_trivial(&self) -> bool {
        let k0 = self.kernel[0];
        self.kernel.iter().all(|k| *k == k0)
    }

    /// Bound on the spatial Lipschitz constant of `f(., m)` for any probability `m`.
    pub fn lipschitz_bound(&self) -> f64 {
        match &self.modes {
            Some(m) => {
                let per_axis: f64 = m.coeffs.iter().enumerate().skip(1).map(|(k, c)| TAU * k as f64 * c.abs()).sum();
                per_axis * (self.grid.dim() as f64).sqrt()
            }
            None => {
                let h = self.grid.h();
                let mut lip: f64 = 0.0;
                for d in 0..self.grid.cells() {
                    let mut g2 = 0.0;
                    for axis in 0..self.grid.dim() {
                        let slope = (self.kernel[self.grid.shift(d, axis, 1)] - self.kernel[d]) / h;
                        g2 += slope * slope;
                    }
                    lip = lip.max(g2.sqrt());
                }
                lip
            }
        }
    }

    /// `max |f|` over probability densities.
    pub fn sup_bound(&self) -> f64 {
        self.kernel.iter().map(|k| k.abs()).fold(0.0, f64::max) + self.offset.abs()
    }

    /// Discrete Fourier coefficients `sum_d rho(d) cos(2 pi <k, d>) h^dim`, one
    /// per frequency cell.
    pub fn fourier_coefficients(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = g.points() as f64;
        (0..g.cells())
            .map(|k| {
                let kc = g.coords(k);
                (0..g.cells())
                    .map(|d| {
                        let dc = g.coords(d);
                        let phase: f64 = (0..g.dim()).map(|i| (kc[i] * dc[i]) as f64).sum::<f64>() / n;
                        self.kernel[d] * (TAU * phase).cos()
                    })
                    .sum::<f64>()
                    * g.cell_volume()
            })
            .collect()
    }

    /// Sufficient monotonicity certificate: all Fourier coefficients `>= -1e-12`.
    pub fn is_certified_monotone(&self) -> bool {
        self.fourier_coefficients().iter().all(|c| *c >= -1e-12)
    }

    /// `F(m) = <rho * m, m> / 2 + offset`.
    pub fn potential(&self, m: &ProbabilityVector) -> Result<f64> {
        self.grid.check_same(m.grid())?;
        Ok(self.potential_of(m.as_slice()))
    }

    pub(crate) fn potential_of(&self, density: &[f64]) -> f64 {
        let mut field = vec![0.0; density.len()];
        self.convolve(density, &mut field);
        0.5 * self.grid.cell_volume() * field.iter().zip(density).map(|(f, m)| f * m).sum::<f64>() + self.offset
    }

    /// `f(., m) - int f(., m) dm`, the derivative under the zero-mean convention.
    pub fn normalized_derivative(&self, m: &ProbabilityVector) -> Result<Vec<f64>> {
        let mut f = self.eval(m)?;
        let mean = integrate(&self.grid, &f, m.as_slice());
        f.iter_mut().for_each(|v| *v -= mean);
        Ok(f)
    }

    /// `rho * m` without the offset.
    fn convolve(&self, density: &[f64], out: &mut [f64]) {
        match &self.modes {
            Some(modes) => self.convolve_modes(modes, density, out),
            None => self.convolve_direct(density, out),
        }
    }

    fn convolve_modes(&self, modes: &CosineModes, density: &[f64], out: &mut [f64]) {
        let cells = self.grid.cells();
        let vol = self.grid.cell_volume();
        let mass: f64 = density.iter().sum::<f64>() * vol;
        out.iter_mut().for_each(|o| *o = modes.coeffs[0] * mass);
        for (k, c) in modes.coeffs.iter().enumerate().skip(1) {
            for axis in 0..self.grid.dim() {
                let base = ((k - 1) * self.grid.dim() + axis) * cells;
                let cos = &modes.cos[base..base + cells];
                let sin = &modes.sin[base..base + cells];
                let cm: f64 = cos.iter().zip(density).map(|(a, m)| a * m).sum::<f64>() * vol;
                let sm: f64 = sin.iter().zip(density).map(|(a, m)| a * m).sum::<f64>() * vol;
                for (x, o) in out.iter_mut().enumerate() {
                    *o += c * (cos[x] * cm + sin[x] * sm);
                }
            }
        }
    }

    fn convolve_direct(&self, density: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let vol = g.cell_volume();
        for (x, o) in out.iter_mut().enumerate() {
            *o = density
                .iter()
                .enumerate()
                .map(|(y, m)| self.kernel[difference(g, x, y)] * m)
                .sum::<f64>()
                * vol;
        }
    }
}

impl Coupling for ConvolutionCoupling {
    fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn eval_into(&self, density: &[f64], out: &mut [f64]) {
        self.convolve(density, out);
        out.iter_mut().for_each(|o| *o += self.offset);
    }
}

/// Displacement cell `x - y`.
fn difference(g: &TorusGrid, x: usize, y: usize) -> usize {
    let (a, b) = (g.coords(x), g.coords(y));
    let n = g.points();
    g.cell_at([(a[0] + n - b[0]) % n, (a[1] + n - b[1]) % n])
}

fn negate(g: &TorusGrid, d: usize) -> usize {
    difference(g, 0, d)
}

/// `int field dm` on the grid.
pub fn integrate(grid: &TorusGrid, field: &[f64], density: &[f64]) -> f64 {
    field.iter().zip(density).map(|(f, m)| f * m).sum::<f64>() * grid.cell_volume()
}

/// `f(., m(t_k))` for every time node, as a scalar flow.
pub fn coupling_flow(coupling: &dyn Coupling, m: &DensityFlow, exec: Exec) -> Result<ScalarFlow> {
    coupling.grid().check_same(m.grid())?;
    let mut out = ScalarFlow::zeros(*m.grid(), *m.time());
    let cells = m.grid().cells();
    exec.for_each_chunk(out.values_mut(), cells, |k, slot| coupling.eval_into(m.slice(k), slot));
    Ok(out)
}

/// Potential built from a black-box coupling along the segment from `m0`:
/// `int_0^1 int f(x, (1-t) m0 + t m) d(m - m0)(x) dt`, with composite
/// Simpson quadrature in `t` over `panels` sub-intervals (a 3/8 panel closes
/// an odd count), exact for integrands up to cubic order in `t`.
pub fn potential_from_coupling(
    f: &dyn Coupling,
    m0: &ProbabilityVector,
    m: &ProbabilityVector,
    panels: usize,
) -> Result<f64> {
    if panels < 2 {
        return Err(Error::Validation(format!("quadrature needs at least 2 sub-intervals, got {panels}")));
    }
    f.grid().check_same(m0.grid())?;
    f.grid().check_same(m.grid())?;
    let grid = *f.grid();
    let diff: Vec<f64> = m.as_slice().iter().zip(m0.as_slice()).map(|(a, b)| a - b).collect();
    let integrand = |t: f64| -> f64 {
        let mix: Vec<f64> = m0.as_slice().iter().zip(m.as_slice()).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let mut field = vec![0.0; grid.cells()];
        f.eval_into(&mix, &mut field);
        integrate(&grid, &field, &diff)
    };
    let step = 1.0 / panels as f64;
    let node = |i: usize| integrand(i as f64 * step);
    let (simpson_end, tail) = if panels.is_multiple_of(2) { (panels, false) } else { (panels - 3, true) };
    let mut total = 0.0;
    let mut i = 0;
    while i < simpson_end {
        total += step / 3.0 * (node(i) + 4.0 * node(i + 1) + node(i + 2));
        i += 2;
    }
    if tail {
        let j = simpson_end;
        total += 3.0 * step / 8.0 * (node(j) + 3.0 * node(j + 1) + 3.0 * node(j + 2) + node(j + 3));
    }
    Ok(total)
}

/// Step of the one-sided measure-perturbation differences.
const SYMMETRY_STEP: f64 = 1e-5;

/// Finite-difference test of `df/dm(x, m, y) = df/dm(y, m, x)`.
///
/// The measure derivative is only defined up to a function of its first
/// argument, so the test compares the invariant cross differences
/// `k(x,y) - k(x,z) - k(z,y) + k(z,z)` for a reference cell `z` outside
/// `{x, y}`. Returns the absolute asymmetry.
pub fn check_symmetry(f: &dyn Coupling, m: &ProbabilityVector, x: usize, y: usize) -> Result<f64> {
    let grid = *f.grid();
    grid.check_same(m.grid())?;
    if x >= grid.cells() || y >= grid.cells() {
        return Err(Error::Validation("cell index outside the grid".into()));
    }
    if x == y {
        return Ok(0.0);
    }
    let z = (0..grid.cells()).find(|c| *c != x && *c != y).expect("grid has at least 3 cells");
    let base = f.eval(m)?;
    // D[a][b] = (f(b, (1-s) m + s delta_a) - f(b, m)) / s = k(b, a) - c(b)
    let response = |a: usize| -> Result<Vec<f64>> {
        let bumped = m.mix(&ProbabilityVector::delta(grid, a)?, SYMMETRY_STEP)?;
        Ok(f.eval(&bumped)?.iter().zip(&base).map(|(p, q)| (p - q) / SYMMETRY_STEP).collect())
    };
    let (dx, dy, dz) = (response(x)?, response(y)?, response(z)?);
    let cross_xy = (dy[x] - dz[x]) - (dy[z] - dz[z]);
    let cross_yx = (dx[y] - dz[y]) - (dx[z] - dz[z]);
    Ok((cross_xy - cross_yx).abs())
}

/// `int (f(x, m) - f(x, m')) d(m - m')(x)`; nonnegative for monotone couplings.
pub fn check_monotone(f: &dyn Coupling, m: &ProbabilityVector, m_prime: &ProbabilityVector) -> Result<f64> {
    let a = f.eval(m)?;
    let b = f.eval(m_prime)?;
    let df: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
    let dm: Vec<f64> = m.as_slice().iter().zip(m_prime.as_slice()).map(|(p, q)| p - q).collect();
    Ok(integrate(f.grid(), &df, &dm))
}
