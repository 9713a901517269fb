//! Torus and time grids, density and field flows, and the Wasserstein-1
//! distance between grid densities.

mod flow;
mod grid;
mod transport;
mod wasserstein;

pub use flow::{running_average, DensityFlow, ProbabilityVector, ScalarFlow, VectorFlow, MASS_TOLERANCE};
pub use grid::{TimeGrid, TorusGrid};
pub use transport::{d1_distance_lp, MinCostFlow, LP_CELL_CAP};
pub use wasserstein::{d1_distance, per_slice_d1_with, sup_t_d1, sup_t_d1_with};
