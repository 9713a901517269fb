//! Fictitious play for potential mean field games on the periodic torus.
//!
//! The second-order loop alternates an explicit Hamilton-Jacobi-Bellman
//! solve against the averaged belief with a Fokker-Planck solve, and
//! averages the resulting flows. The first-order loop works on grid
//! trajectories with an exact dynamic-programming best response; the
//! N-player loop is the same procedure started from an empirical measure.

pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod fokker_planck;
pub mod geometry;
pub mod hamiltonian;
pub mod hjb;
pub mod nplayer;
pub mod oracles;
pub mod par;
pub mod parabolic;
pub mod report;
mod stencil;
pub mod trajectory;
pub mod verification;

pub use error::{Error, Result};
pub use par::Exec;
