//! Backward explicit solve of the viscous Hamilton-Jacobi-Bellman equation
//! `-du/dt - lap u + H(x, grad u) = f(x, m(t))`, `u(T) = g(x, m(T))`.
//!
//! The first-order part uses the Lax-Friedrichs numerical Hamiltonian
//! `H(x, (D- + D+)/2) - theta/2 sum_i (D+_i - D-_i)`, which makes the update
//! monotone when `theta >= max |d_p H|` and the CFL bound holds.

use serde::Serialize;

use crate::coupling::{coupling_flow, Coupling};
use crate::error::{Error, Result};
use crate::geometry::{DensityFlow, ScalarFlow, TimeGrid, TorusGrid, VectorFlow};
use crate::hamiltonian::QuadraticHamiltonian;
use crate::par::Exec;
use crate::stencil::Stencil;

pub const DEFAULT_CFL_SAFETY: f64 = 0.5;

/// Viscosity coefficient and CFL safety factor shared by the HJB and FP schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjbScheme {
    theta: f64,
    cfl_safety: f64,
}

impl HjbScheme {
    pub fn new(theta: f64, cfl_safety: f64) -> Result<Self> {
        if !(theta.is_finite() && theta >= 0.0) {
            return Err(Error::Validation(format!("viscosity coefficient must be finite and >= 0, got {theta}")));
        }
        if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
            return Err(Error::Validation(format!("CFL safety must lie in (0, 1], got {cfl_safety}")));
        }
        Ok(Self { theta, cfl_safety })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn cfl_safety(&self) -> f64 {
        self.cfl_safety
    }

    /// Largest admissible time step: `safety * h^2 / (2 dim + theta h dim)`.
    pub fn max_dt(&self, grid: &TorusGrid) -> f64 {
        let h = grid.h();
        let d = grid.dim() as f64;
        self.cfl_safety * h * h / (2.0 * d + self.theta * h * d)
    }

    /// Smallest step count on `[0, horizon]` that satisfies the CFL bound.
    pub fn min_steps(&self, grid: &TorusGrid, horizon: f64) -> usize {
        ((horizon / self.max_dt(grid)) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn auto_time(&self, grid: &TorusGrid, horizon: f64) -> Result<TimeGrid> {
        TimeGrid::new(horizon, self.min_steps(grid, horizon))
    }

    pub fn check_cfl(&self, grid: &TorusGrid, time: &TimeGrid) -> Result<()> {
        let required = self.max_dt(grid);
        if time.dt() > required * (1.0 + 1e-12) {
            return Err(Error::Cfl {
                dt: time.dt(),
                required,
                min_steps: self.min_steps(grid, time.horizon()),
            });
        }
        Ok(())
    }

    /// Fails when some drift component exceeds `theta`, which would break monotonicity.
    pub fn check_drift(&self, drift: &VectorFlow) -> Result<()> {
        let peak = drift.max_abs();
        if peak > self.theta {
            return Err(Error::Scheme(format!(
                "drift magnitude {peak} exceeds the viscosity coefficient {}; raise theta",
                self.theta
            )));
        }
        Ok(())
    }
}

/// A-priori bound on `max |d_p H(x, grad u)|`: `Lip(g) + T Lip(f) + |b|_inf + 1`.
pub fn viscosity_bound(f_lipschitz: f64, g_lipschitz: f64, ham: &QuadraticHamiltonian, horizon: f64) -> f64 {
    g_lipschitz + horizon * f_lipschitz + ham.drift().sup_norm() + 1.0
}

/// Backward solve with an explicit source: `source.slice(k)` enters the step
/// from `t_{k+1}` to `t_k` (left endpoint), `terminal` is `u(T)`.
pub fn hjb_backward(
    terminal: &[f64],
    source: &ScalarFlow,
    ham: &QuadraticHamiltonian,
    scheme: &HjbScheme,
    exec: Exec,
) -> Result<ScalarFlow> {
    let grid = *source.grid();
    let time = *source.time();
    grid.check_same(ham.grid())?;
    scheme.check_cfl(&grid, &time)?;
    let cells = grid.cells();
    if terminal.len() != cells {
        return Err(Error::Dimension(format!("terminal data has {} cells, grid has {cells}", terminal.len())));
    }
    let stencil = Stencil::new(&grid);
    let dim = grid.dim();
    let dt = time.dt();
    let visc = 1.0 + 0.5 * scheme.theta * grid.h();
    let mut u = ScalarFlow::zeros(grid, time);
    let steps = time.steps();
    u.slice_mut(steps).copy_from_slice(terminal);
    let values = u.values_mut();
    for k in (0..steps).rev() {
        let (head, tail) = values.split_at_mut((k + 1) * cells);
        let next = &tail[..cells];
        let cur = &mut head[k * cells..];
        let f = source.slice(k);
        exec.fill_cells(cur, |c| {
            let mut p = [0.0; 2];
            stencil.gradient(next, c, &mut p);
            let lap = stencil.laplacian(next, c);
            next[c] + dt * (visc * lap - ham.eval(c, &p[..dim]) + f[c])
        });
    }
    u.check_finite()?;
    Ok(u)
}

/// Value function against a belief flow: `f(., belief(t_k))` as source and
/// `g(., belief(T))` as terminal data.
pub fn solve_hjb_backward(
    belief: &DensityFlow,
    f: &dyn Coupling,
    g: &dyn Coupling,
    ham: &QuadraticHamiltonian,
    scheme: &HjbScheme,
    exec: Exec,
) -> Result<ScalarFlow> {
    let source = coupling_flow(f, belief, exec)?;
    let mut terminal = vec![0.0; belief.grid().cells()];
    g.grid().check_same(belief.grid())?;
    g.eval_into(belief.slice(belief.time().steps()), &mut terminal);
    hjb_backward(&terminal, &source, ham, scheme, exec)
}

/// Centered periodic gradient of every slice.
pub fn centered_gradient(u: &ScalarFlow, exec: Exec) -> VectorFlow {
    let grid = *u.grid();
    let stencil = Stencil::new(&grid);
    let dim = grid.dim();
    let mut out = VectorFlow::zeros(grid, *u.time());
    exec.for_each_chunk(out.values_mut(), grid.cells() * dim, |k, slot| {
        let v = u.slice(k);
        for (c, g) in slot.chunks_mut(dim).enumerate() {
            stencil.gradient(v, c, g);
        }
    });
    out
}

/// `d_p H(x, grad u)` on every slice, from the centered gradient.
pub fn drift_flow(u: &ScalarFlow, ham: &QuadraticHamiltonian, exec: Exec) -> Result<VectorFlow> {
    ham.grid().check_same(u.grid())?;
    let grid = *u.grid();
    let stencil = Stencil::new(&grid);
    let dim = grid.dim();
    let mut out = VectorFlow::zeros(grid, *u.time());
    exec.for_each_chunk(out.values_mut(), grid.cells() * dim, |k, slot| {
        let v = u.slice(k);
        let mut p = [0.0; 2];
        for (c, a) in slot.chunks_mut(dim).enumerate() {
            stencil.gradient(v, c, &mut p);
            ham.grad_p_into(c, &p[..dim], a);
        }
    });
    Ok(out)
}

/// Sup-norm defect of `u` in the solver's own discrete equation, in rate form:
/// `max_k |(u_k - u_{k+1})/dt - [(1 + theta h/2) lap u_{k+1} - H + source_k]|`
/// together with the terminal mismatch `max |u_K - terminal|`.
pub fn hjb_residual(
    u: &ScalarFlow,
    terminal: &[f64],
    source: &ScalarFlow,
    ham: &QuadraticHamiltonian,
    scheme: &HjbScheme,
) -> Result<f64> {
    let grid = *u.grid();
    let time = *u.time();
    grid.check_same(source.grid())?;
    time.check_same(source.time())?;
    let stencil = Stencil::new(&grid);
    let dim = grid.dim();
    let dt = time.dt();
    let visc = 1.0 + 0.5 * scheme.theta * grid.h();
    let mut worst = u
        .slice(time.steps())
        .iter()
        .zip(terminal)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut p = [0.0; 2];
    for k in 0..time.steps() {
        let (cur, next, f) = (u.slice(k), u.slice(k + 1), source.slice(k));
        for c in 0..grid.cells() {
            stencil.gradient(next, c, &mut p);
            let rhs = visc * stencil.laplacian(next, c) - ham.eval(c, &p[..dim]) + f[c];
            worst = worst.max(((cur[c] - next[c]) / dt - rhs).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::ConvolutionCoupling;
    use crate::geometry::ProbabilityVector;
    use std::f64::consts::TAU;

    fn setup(n: usize, theta: f64) -> (TorusGrid, HjbScheme, TimeGrid) {
        let g = TorusGrid::line(n).unwrap();
        let s = HjbScheme::new(theta, 0.5).unwrap();
        let t = s.auto_time(&g, 1.0).unwrap();
        (g, s, t)
    }

    #[test]
    fn cfl_bound_and_errors() {
        let (g, s, t) = setup(64, 10.0);
        s.check_cfl(&g, &t).unwrap();
        assert!(t.dt() <= s.max_dt(&g) * (1.0 + 1e-12));
        let coarse = TimeGrid::new(1.0, 64).unwrap();
        match s.check_cfl(&g, &coarse) {
            Err(Error::Cfl { min_steps, .. }) => assert_eq!(min_steps, t.steps()),
            other => panic!("expected CFL error, got {other:?}"),
        }
        assert!(HjbScheme::new(1.0, 0.0).is_err());
        assert!(HjbScheme::new(-1.0, 0.5).is_err());
    }

    #[test]
    fn zero_data_gives_zero_value() {
        let (g, s, t) = setup(16, 1.0);
        let src = ScalarFlow::zeros(g, t);
        let u = hjb_backward(&[0.0; 16], &src, &QuadraticHamiltonian::free(g), &s, Exec::default()).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn constant_source_accumulates_linearly() {
        let (g, s, t) = setup(16, 1.0);
        let f = ConvolutionCoupling::constant(g, 0.7);
        let zero = ConvolutionCoupling::constant(g, 0.0);
        let belief = DensityFlow::constant(&ProbabilityVector::uniform(g), t);
        let ham = QuadraticHamiltonian::free(g);
        let u = solve_hjb_backward(&belief, &f, &zero, &ham, &s, Exec::default()).unwrap();
        for k in 0..t.nodes() {
            for v in u.slice(k) {
                assert!((v - 0.7 * (1.0 - t.t(k))).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn comparison_and_constant_shift() {
        let (g, s, t) = setup(24, 4.0);
        let ham = QuadraticHamiltonian::free(g);
        let term: Vec<f64> = (0..24).map(|c| 0.2 * (TAU * g.position(c, 0)).cos()).collect();
        let low = ScalarFlow::from_fn(g, t, |tt, x| (TAU * x[0]).sin() * tt);
        let high = ScalarFlow::from_fn(g, t, |tt, x| (TAU * x[0]).sin() * tt + 0.1 * x[0]);
        let term_high: Vec<f64> = term.iter().map(|v| v + 0.05).collect();
        let u1 = hjb_backward(&term, &low, &ham, &s, Exec::default()).unwrap();
        let u2 = hjb_backward(&term_high, &high, &ham, &s, Exec::default()).unwrap();
        assert!(u1.as_slice().iter().zip(u2.as_slice()).all(|(a, b)| a <= b));

        let shifted = ScalarFlow::from_fn(g, t, |tt, x| (TAU * x[0]).sin() * tt + 0.3);
        let u3 = hjb_backward(&term, &shifted, &ham, &s, Exec::default()).unwrap();
        for k in 0..t.nodes() {
            for (a, b) in u1.slice(k).iter().zip(u3.slice(k)) {
                assert!((b - a - 0.3 * (1.0 - t.t(k))).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solution_has_zero_residual() {
        let (g, s, t) = setup(20, 4.0);
        let ham = QuadraticHamiltonian::free(g);
        let src = ScalarFlow::from_fn(g, t, |tt, x| (TAU * x[0]).cos() * (1.0 + tt));
        let term: Vec<f64> = (0..20).map(|c| (TAU * g.position(c, 0)).sin()).collect();
        let u = hjb_backward(&term, &src, &ham, &s, Exec::default()).unwrap();
        assert!(hjb_residual(&u, &term, &src, &ham, &s).unwrap() < 1e-8);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let (g, _, t) = setup(8, 1.0);
        let u = ScalarFlow::from_fn(g, t, |_, _| 2.0);
        assert_eq!(centered_gradient(&u, Exec::default()).max_abs(), 0.0);
    }
}
