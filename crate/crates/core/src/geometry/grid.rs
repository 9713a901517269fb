use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic mesh of the unit torus in one or two dimensions.
///
/// Cell `c` sits at the node `(i0 * h, i1 * h)` with `c = i0 + points * i1`;
/// densities are cell averages, so integrals are `h^dim`-weighted sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    points: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, points: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Validation(format!("torus dimension must be 1 or 2, got {dim}")));
        }
        if points < 3 {
            return Err(Error::Validation(format!("need at least 3 points per dimension, got {points}")));
        }
        Ok(Self { dim, points })
    }

    pub fn line(points: usize) -> Result<Self> {
        Self::new(1, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn h(&self) -> f64 {
        1.0 / self.points as f64
    }

    pub fn cells(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Per-axis indices of a cell; unused axes are 0.
    pub fn coords(&self, cell: usize) -> [usize; 2] {
        [cell % self.points, cell / self.points]
    }

    pub fn cell_at(&self, coords: [usize; 2]) -> usize {
        match self.dim {
            1 => coords[0] % self.points,
            _ => coords[0] % self.points + self.points * (coords[1] % self.points),
        }
    }

    /// Cell reached from `cell` by moving `delta` nodes along `axis`, wrapping.
    pub fn shift(&self, cell: usize, axis: usize, delta: isize) -> usize {
        let mut c = self.coords(cell);
        let n = self.points as isize;
        c[axis] = (c[axis] as isize + delta).rem_euclid(n) as usize;
        self.cell_at(c)
    }

    /// Cell reached by applying a displacement vector (one entry per axis).
    pub fn displace(&self, cell: usize, disp: &[i32]) -> usize {
        let mut c = self.coords(cell);
        let n = self.points as i64;
        for (axis, d) in disp.iter().enumerate().take(self.dim) {
            c[axis] = (c[axis] as i64 + *d as i64).rem_euclid(n) as usize;
        }
        self.cell_at(c)
    }

    /// Signed wrapped displacement from `a` to `b` along `axis`, in nodes,
    /// chosen in `(-points/2, points/2]`.
    pub fn wrapped_offset(&self, a: usize, b: usize, axis: usize) -> isize {
        let n = self.points as isize;
        let d = (self.coords(b)[axis] as isize - self.coords(a)[axis] as isize).rem_euclid(n);
        if 2 * d > n {
            d - n
        } else {
            d
        }
    }

    /// Node coordinate of `cell` along `axis`.
    pub fn position(&self, cell: usize, axis: usize) -> f64 {
        self.coords(cell)[axis] as f64 * self.h()
    }

    /// Torus-wrapped L1 distance between two nodes.
    pub fn torus_l1(&self, a: usize, b: usize) -> f64 {
        (0..self.dim)
            .map(|axis| self.wrapped_offset(a, b, axis).unsigned_abs() as f64 * self.h())
            .sum()
    }

    pub(crate) fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!(
                "grid {}^{} does not match grid {}^{}",
                self.points, self.dim, other.points, other.dim
            )));
        }
        Ok(())
    }
}

/// Uniform time mesh of `[0, T]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Validation("time grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of time nodes, `steps + 1`.
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::Dimension(format!(
                "time grid (T={}, K={}) does not match (T={}, K={})",
                self.horizon, self.steps, other.horizon, other.steps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_indexing_wraps() {
        let g = TorusGrid::line(8).unwrap();
        assert_eq!(g.shift(0, 0, -1), 7);
        assert_eq!(g.shift(7, 0, 1), 0);
        assert_eq!(g.shift(3, 0, 16), 3);
        assert_eq!(g.h() * g.points() as f64, 1.0);

        let g2 = TorusGrid::new(2, 4).unwrap();
        let c = g2.cell_at([3, 3]);
        assert_eq!(g2.shift(c, 1, 1), g2.cell_at([3, 0]));
        assert_eq!(g2.displace(c, &[1, -4]), g2.cell_at([0, 3]));
    }

    #[test]
    fn wrapped_l1() {
        let g = TorusGrid::new(2, 8).unwrap();
        let a = g.cell_at([0, 0]);
        let b = g.cell_at([4, 4]);
        assert_eq!(g.torus_l1(a, b), 1.0);
        assert_eq!(g.torus_l1(a, g.cell_at([7, 1])), 0.25);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TorusGrid::new(3, 8).is_err());
        assert!(TorusGrid::line(2).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        let t = TimeGrid::new(1.0, 3).unwrap();
        assert_eq!(t.dt() * 3.0, 1.0);
        assert_eq!(t.t(3), 1.0);
    }
}
