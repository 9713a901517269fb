use crate::error::{Error, Result};

use super::grid::{TimeGrid, TorusGrid};

/// Tolerance on `sum(weights) * h^dim = 1`.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability density on the grid, stored as cell averages.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    grid: TorusGrid,
    weights: Vec<f64>,
}

impl ProbabilityVector {
    /// Validates without renormalizing.
    pub fn new(grid: TorusGrid, weights: Vec<f64>) -> Result<Self> {
        validate_density(&grid, &weights, MASS_TOLERANCE)?;
        Ok(Self { grid, weights })
    }

    /// Rescales nonnegative raw weights to unit mass.
    pub fn normalized(grid: TorusGrid, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.cells() {
            return Err(Error::Dimension(format!(
                "expected {} weights, got {}",
                grid.cells(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Validation(format!("density weights must be finite and >= 0, found {w}")));
        }
        let mass: f64 = weights.iter().sum::<f64>() * grid.cell_volume();
        if mass <= 0.0 {
            return Err(Error::Validation("density has zero mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= mass);
        Ok(Self { grid, weights })
    }

    pub fn uniform(grid: TorusGrid) -> Self {
        Self { grid, weights: vec![1.0; grid.cells()] }
    }

    /// All mass in one cell.
    pub fn delta(grid: TorusGrid, cell: usize) -> Result<Self> {
        if cell >= grid.cells() {
            return Err(Error::Validation(format!("cell {cell} outside grid of {} cells", grid.cells())));
        }
        let mut weights = vec![0.0; grid.cells()];
        weights[cell] = 1.0 / grid.cell_volume();
        Ok(Self { grid, weights })
    }

    /// Samples `f` at the nodes and normalizes.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let weights = (0..grid.cells())
            .map(|c| {
                let x = [grid.position(c, 0), grid.position(c, 1)];
                f(&x[..grid.dim()])
            })
            .collect();
        Self::normalized(grid, weights)
    }

    pub(crate) fn from_raw(grid: TorusGrid, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), grid.cells());
        Self { grid, weights }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }

    pub fn mass(&self) -> f64 {
        mass(&self.grid, &self.weights)
    }

    /// `(1 - s) self + s other`.
    pub fn mix(&self, other: &ProbabilityVector, s: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect();
        Ok(Self { grid: self.grid, weights })
    }
}

pub(crate) fn mass(grid: &TorusGrid, weights: &[f64]) -> f64 {
    weights.iter().sum::<f64>() * grid.cell_volume()
}

fn validate_density(grid: &TorusGrid, weights: &[f64], tol: f64) -> Result<()> {
    if weights.len() != grid.cells() {
        return Err(Error::Dimension(format!(
            "expected {} weights, got {}",
            grid.cells(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::Validation(format!("density weights must be finite and >= 0, found {w}")));
    }
    let m = mass(grid, weights);
    if (m - 1.0).abs() > tol {
        return Err(Error::Validation(format!("density mass {m} differs from 1")));
    }
    Ok(())
}

/// Storage shared by the three flow types: `nodes x cells x components`.
#[derive(Debug, Clone, PartialEq)]
struct FlowData {
    grid: TorusGrid,
    time: TimeGrid,
    components: usize,
    values: Vec<f64>,
}

impl FlowData {
    fn zeros(grid: TorusGrid, time: TimeGrid, components: usize) -> Self {
        Self {
            grid,
            time,
            components,
            values: vec![0.0; time.nodes() * grid.cells() * components],
        }
    }

    fn stride(&self) -> usize {
        self.grid.cells() * self.components
    }

    fn slice(&self, k: usize) -> &[f64] {
        let s = self.stride();
        &self.values[k * s..(k + 1) * s]
    }

    fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.values[k * s..(k + 1) * s]
    }

    fn check_aligned(&self, other: &FlowData) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        self.time.check_same(&other.time)?;
        if self.components != other.components {
            return Err(Error::Dimension("flow component counts differ".into()));
        }
        Ok(())
    }

    fn sup_diff(&self, other: &FlowData) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `self += (new - self) / (n + 1)`; `n = 0` copies `new`.
    fn fold_average(&mut self, new: &FlowData, n: usize) {
        if n == 0 {
            self.values.copy_from_slice(&new.values);
        } else {
            self.fold_weighted(new, 1.0 / (n as f64 + 1.0));
        }
    }

    /// `self += s (new - self)`.
    fn fold_weighted(&mut self, new: &FlowData, s: f64) {
        self.values
            .iter_mut()
            .zip(&new.values)
            .for_each(|(a, b)| *a += (b - *a) * s);
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            let k = pos / self.stride();
            return Err(Error::Divergence {
                iteration: 0,
                detail: format!("non-finite {what} value at time node {k}"),
            });
        }
        Ok(())
    }
}

macro_rules! flow_accessors {
    ($ty:ident) => {
        impl $ty {
            pub fn grid(&self) -> &TorusGrid {
                &self.0.grid
            }

            pub fn time(&self) -> &TimeGrid {
                &self.0.time
            }

            pub fn slice(&self, k: usize) -> &[f64] {
                self.0.slice(k)
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0.values
            }

            /// Largest entry-wise absolute difference.
            pub fn sup_diff(&self, other: &$ty) -> Result<f64> {
                self.0.check_aligned(&other.0)?;
                Ok(self.0.sup_diff(&other.0))
            }

            pub fn check_finite(&self) -> Result<()> {
                self.0.check_finite(stringify!($ty))
            }
        }
    };
}

/// Time-indexed probability densities, one slice per time node.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFlow(FlowData);

flow_accessors!(DensityFlow);

impl DensityFlow {
    /// The flow that stays at `m` for all times.
    pub fn constant(m: &ProbabilityVector, time: TimeGrid) -> Self {
        let mut data = FlowData::zeros(*m.grid(), time, 1);
        for k in 0..time.nodes() {
            data.slice_mut(k).copy_from_slice(m.as_slice());
        }
        Self(data)
    }

    pub fn from_slices(time: TimeGrid, slices: &[ProbabilityVector]) -> Result<Self> {
        if slices.len() != time.nodes() {
            return Err(Error::Dimension(format!(
                "expected {} slices, got {}",
                time.nodes(),
                slices.len()
            )));
        }
        let grid = *slices[0].grid();
        let mut data = FlowData::zeros(grid, time, 1);
        for (k, s) in slices.iter().enumerate() {
            grid.check_same(s.grid())?;
            data.slice_mut(k).copy_from_slice(s.as_slice());
        }
        Ok(Self(data))
    }

    pub(crate) fn zeros(grid: TorusGrid, time: TimeGrid) -> Self {
        Self(FlowData::zeros(grid, time, 1))
    }

    pub(crate) fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        self.0.slice_mut(k)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0.values
    }

    /// Copy of slice `k` as a probability vector (not revalidated).
    pub fn probability(&self, k: usize) -> ProbabilityVector {
        ProbabilityVector::from_raw(self.0.grid, self.slice(k).to_vec())
    }

    pub fn slice_mass(&self, k: usize) -> f64 {
        mass(&self.0.grid, self.slice(k))
    }

    /// Largest deviation of any slice's mass from 1.
    pub fn max_mass_drift(&self) -> f64 {
        (0..self.0.time.nodes())
            .map(|k| (self.slice_mass(k) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.0.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Checks every slice against the probability invariants at `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for k in 0..self.0.time.nodes() {
            validate_density(&self.0.grid, self.slice(k), tol)
                .map_err(|e| Error::Validation(format!("slice {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn running_average(&self, new: &DensityFlow, n: usize) -> Result<DensityFlow> {
        running_average(self, new, n)
    }

    pub(crate) fn fold_average(&mut self, new: &DensityFlow, n: usize) {
        self.0.fold_average(&new.0, n);
    }

    pub(crate) fn fold_weighted(&mut self, new: &DensityFlow, s: f64) {
        self.0.fold_weighted(&new.0, s);
    }
}

/// Scalar field over time, e.g. the value function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFlow(FlowData);

flow_accessors!(ScalarFlow);

impl ScalarFlow {
    pub fn zeros(grid: TorusGrid, time: TimeGrid) -> Self {
        Self(FlowData::zeros(grid, time, 1))
    }

    pub fn from_fn(grid: TorusGrid, time: TimeGrid, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let mut flow = Self::zeros(grid, time);
        for k in 0..time.nodes() {
            let t = time.t(k);
            for (c, v) in flow.slice_mut(k).iter_mut().enumerate() {
                let x = [grid.position(c, 0), grid.position(c, 1)];
                *v = f(t, &x[..grid.dim()]);
            }
        }
        flow
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        self.0.slice_mut(k)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0.values
    }

    pub fn max_abs(&self) -> f64 {
        self.0.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Vector field over time, components interleaved per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFlow(FlowData);

flow_accessors!(VectorFlow);

impl VectorFlow {
    pub fn zeros(grid: TorusGrid, time: TimeGrid) -> Self {
        let dim = grid.dim();
        Self(FlowData::zeros(grid, time, dim))
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        self.0.slice_mut(k)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0.values
    }

    pub fn max_abs(&self) -> f64 {
        self.0.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn running_average(&self, new: &VectorFlow, n: usize) -> Result<VectorFlow> {
        if n < 1 {
            return Err(Error::Validation("running average needs n >= 1".into()));
        }
        self.0.check_aligned(&new.0)?;
        let mut out = self.clone();
        out.0.fold_average(&new.0, n);
        Ok(out)
    }

    pub(crate) fn fold_average(&mut self, new: &VectorFlow, n: usize) {
        self.0.fold_average(&new.0, n);
    }
}

/// Average of `n + 1` flows given the average `prev_avg` of the first `n`.
pub fn running_average(prev_avg: &DensityFlow, new: &DensityFlow, n: usize) -> Result<DensityFlow> {
    if n < 1 {
        return Err(Error::Validation("running average needs n >= 1".into()));
    }
    prev_avg.0.check_aligned(&new.0)?;
    let mut out = prev_avg.clone();
    out.0.fold_average(&new.0, n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_flow(grid: TorusGrid, time: TimeGrid, rng: &mut ChaCha8Rng) -> DensityFlow {
        let slices: Vec<_> = (0..time.nodes())
            .map(|_| {
                let w = (0..grid.cells()).map(|_| rng.random::<f64>()).collect();
                ProbabilityVector::normalized(grid, w).unwrap()
            })
            .collect();
        DensityFlow::from_slices(time, &slices).unwrap()
    }

    #[test]
    fn probability_validation() {
        let g = TorusGrid::line(4).unwrap();
        assert!(ProbabilityVector::new(g, vec![1.0; 4]).is_ok());
        assert!(ProbabilityVector::new(g, vec![1.0, 1.0, 1.0, 1.1]).is_err());
        assert!(ProbabilityVector::new(g, vec![2.0, 2.0, 1.0, -1.0]).is_err());
        assert!(ProbabilityVector::new(g, vec![1.0; 3]).is_err());
        let d = ProbabilityVector::delta(g, 2).unwrap();
        assert_eq!(d.mass(), 1.0);
    }

    #[test]
    fn averaging_identical_flows_is_identity() {
        let g = TorusGrid::line(6).unwrap();
        let t = TimeGrid::new(1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_flow(g, t, &mut rng);
        for n in [1, 2, 7] {
            let avg = running_average(&m, &m, n).unwrap();
            assert!(avg.sup_diff(&m).unwrap() <= 1e-15);
        }
        assert!(running_average(&m, &m, 0).is_err());
    }

    #[test]
    fn two_term_average() {
        let g = TorusGrid::line(6).unwrap();
        let t = TimeGrid::new(1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_flow(g, t, &mut rng);
        let b = random_flow(g, t, &mut rng);
        let avg = running_average(&a, &b, 1).unwrap();
        for (i, v) in avg.as_slice().iter().enumerate() {
            assert!((v - 0.5 * (a.as_slice()[i] + b.as_slice()[i])).abs() <= 1e-15);
        }
    }

    #[test]
    fn folding_reproduces_the_arithmetic_mean() {
        let g = TorusGrid::line(8).unwrap();
        let t = TimeGrid::new(1.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let flows: Vec<_> = (0..5).map(|_| random_flow(g, t, &mut rng)).collect();
        let mut avg = flows[0].clone();
        for (n, f) in flows.iter().enumerate().skip(1) {
            avg = running_average(&avg, f, n).unwrap();
        }
        for i in 0..avg.as_slice().len() {
            let direct: f64 = flows.iter().map(|f| f.as_slice()[i]).sum::<f64>() / 5.0;
            assert!((avg.as_slice()[i] - direct).abs() <= 1e-14);
        }
        avg.validate(1e-12).unwrap();
    }
}
