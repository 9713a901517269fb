//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper writes results by index and never reduces in parallel, so
//! outputs are bit-identical whichever executor runs them. Reductions over
//! the produced vectors happen sequentially at the call site.

/// Execution strategy for batch loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Batches shorter than this run sequentially even under `Exec::Parallel`.
pub const MIN_PARALLEL_LEN: usize = 2048;

impl Exec {
    /// `(0..n).map(f).collect()`.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
        }
    }

    /// Fills `out` chunk by chunk; `f(index, chunk)`.
    pub fn for_each_chunk<F>(self, out: &mut [f64], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        match self {
            Exec::Sequential => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(i, c)| f(i, c));
            }
        }
    }

    /// Per-cell map for grid sweeps: only worth splitting on large grids.
    pub fn fill_cells<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel if out.len() >= MIN_PARALLEL_LEN => {
                use rayon::prelude::*;
                out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
            }
            _ => out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i)),
        }
    }

    /// `(0..n).map(f).collect()` for per-cell work: parallel only on large grids.
    pub fn map_cells<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        if n < MIN_PARALLEL_LEN {
            return (0..n).map(f).collect();
        }
        self.map(n, f)
    }

    /// Runs independent jobs, preserving input order in the output.
    pub fn jobs<I, T, F>(self, items: Vec<I>, f: F) -> Vec<T>
    where
        I: Send,
        T: Send,
        F: Fn(I) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => items.into_iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
        }
    }
}
