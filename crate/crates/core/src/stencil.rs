//! Periodic finite-difference stencils shared by the HJB and FP schemes.

use crate::geometry::TorusGrid;

/// Neighbour table: for each cell, `[+e0, -e0, +e1, -e1]` (the last two only in 2D).
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    dim: usize,
    inv_h: f64,
    inv_h2: f64,
    neighbours: Vec<[usize; 4]>,
}

impl Stencil {
    pub(crate) fn new(grid: &TorusGrid) -> Self {
        let neighbours = (0..grid.cells())
            .map(|c| {
                let mut n = [c; 4];
                for axis in 0..grid.dim() {
                    n[2 * axis] = grid.shift(c, axis, 1);
                    n[2 * axis + 1] = grid.shift(c, axis, -1);
                }
                n
            })
            .collect();
        let h = grid.h();
        Self { dim: grid.dim(), inv_h: 1.0 / h, inv_h2: 1.0 / (h * h), neighbours }
    }

    /// Neighbour of `cell` one node forward (`+`) and backward (`-`) on `axis`.
    #[inline]
    pub(crate) fn pair(&self, cell: usize, axis: usize) -> (usize, usize) {
        let n = &self.neighbours[cell];
        (n[2 * axis], n[2 * axis + 1])
    }

    /// `sum_i (v(x+e_i) - 2 v(x) + v(x-e_i)) / h^2`.
    #[inline]
    pub(crate) fn laplacian(&self, v: &[f64], cell: usize) -> f64 {
        let mut s = 0.0;
        for axis in 0..self.dim {
            let (p, m) = self.pair(cell, axis);
            s += v[p] - 2.0 * v[cell] + v[m];
        }
        s * self.inv_h2
    }

    /// `(v(x+e_i) - v(x-e_i)) / 2h` for each axis, written into `out`.
    #[inline]
    pub(crate) fn gradient(&self, v: &[f64], cell: usize, out: &mut [f64]) {
        for (axis, o) in out.iter_mut().enumerate().take(self.dim) {
            let (p, m) = self.pair(cell, axis);
            *o = 0.5 * (v[p] - v[m]) * self.inv_h;
        }
    }

    /// Centered divergence of an interleaved vector field.
    #[inline]
    pub(crate) fn divergence(&self, w: &[f64], cell: usize) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for axis in 0..d {
            let (p, m) = self.pair(cell, axis);
            s += w[p * d + axis] - w[m * d + axis];
        }
        0.5 * s * self.inv_h
    }
}
