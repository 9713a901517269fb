//! Second-order fictitious play: best-respond to the averaged belief with an
//! HJB solve, realize the response with an FP solve, and average.

use crate::coupling::{coupling_flow, Coupling, ConvolutionCoupling};
use crate::error::{Error, Result};
use crate::fokker_planck::{fp_residual, solve_fp_forward};
use crate::geometry::{DensityFlow, ProbabilityVector, ScalarFlow, TimeGrid, TorusGrid, VectorFlow};
use crate::hamiltonian::QuadraticHamiltonian;
use crate::hjb::{centered_gradient, hjb_residual, solve_hjb_backward, viscosity_bound, HjbScheme, DEFAULT_CFL_SAFETY};
use crate::par::Exec;
use crate::report::{BeliefRule, IterationRecord, PlayConfig, PlayReport, StopRule, Termination};

/// Discretization choices for the parabolic solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    /// Viscosity override; defaults to the a-priori drift bound.
    pub theta: Option<f64>,
    pub cfl_safety: f64,
    /// Time steps; `None` picks the smallest count satisfying the CFL bound.
    pub steps: Option<usize>,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { theta: None, cfl_safety: DEFAULT_CFL_SAFETY, steps: None }
    }
}

/// Everything a second-order run needs.
#[derive(Debug, Clone)]
pub struct ParabolicProblem {
    pub m0: ProbabilityVector,
    pub ham: QuadraticHamiltonian,
    pub f: ConvolutionCoupling,
    pub g: ConvolutionCoupling,
    pub scheme: HjbScheme,
    pub time: TimeGrid,
    pub play: PlayConfig,
    pub exec: Exec,
}

impl ParabolicProblem {
    pub fn new(
        m0: ProbabilityVector,
        ham: QuadraticHamiltonian,
        f: ConvolutionCoupling,
        g: ConvolutionCoupling,
        horizon: f64,
        options: SchemeOptions,
        play: PlayConfig,
    ) -> Result<Self> {
        let grid = *m0.grid();
        grid.check_same(ham.grid())?;
        grid.check_same(f.grid())?;
        grid.check_same(g.grid())?;
        play.validate()?;
        let theta = options
            .theta
            .unwrap_or_else(|| viscosity_bound(f.lipschitz_bound(), g.lipschitz_bound(), &ham, horizon));
        let scheme = HjbScheme::new(theta, options.cfl_safety)?;
        let time = match options.steps {
            Some(k) => {
                let t = TimeGrid::new(horizon, k)?;
                scheme.check_cfl(&grid, &t)?;
                t
            }
            None => scheme.auto_time(&grid, horizon)?,
        };
        Ok(Self { m0, ham, f, g, scheme, time, play, exec: Exec::default() })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.m0.grid()
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// `u = HJB(belief)`.
    pub fn best_response(&self, belief: &DensityFlow) -> Result<ScalarFlow> {
        solve_hjb_backward(belief, &self.f, &self.g, &self.ham, &self.scheme, self.exec)
    }

    /// `(m, w) = FP(u)` from `m0`.
    pub fn realize(&self, u: &ScalarFlow) -> Result<(DensityFlow, VectorFlow)> {
        solve_fp_forward(u, &self.m0, &self.ham, &self.scheme, self.exec)
    }
}

/// `int int m H*(x, -w/m) + int F(m(t)) dt + G(m(T))` with left-endpoint time
/// quadrature. Ratios use `max(m, m_floor)`; cells with `m <= m_floor` and
/// `|w| <= m_floor` contribute nothing.
pub fn phi_parabolic(
    m: &DensityFlow,
    w: &VectorFlow,
    f: &ConvolutionCoupling,
    g: &ConvolutionCoupling,
    ham: &QuadraticHamiltonian,
    m_floor: f64,
) -> Result<f64> {
    m.grid().check_same(w.grid())?;
    m.time().check_same(w.time())?;
    let grid = *m.grid();
    let time = *m.time();
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let dt = time.dt();
    let mut total = 0.0;
    let mut q = [0.0; 2];
    for k in 0..time.steps() {
        let (mk, wk) = (m.slice(k), w.slice(k));
        let mut kinetic = 0.0;
        for c in 0..grid.cells() {
            let wc = &wk[c * dim..(c + 1) * dim];
            let wn = wc.iter().map(|v| v * v).sum::<f64>().sqrt();
            if mk[c] <= m_floor && wn <= m_floor {
                continue;
            }
            let denom = mk[c].max(m_floor);
            for (qi, wi) in q.iter_mut().zip(wc) {
                *qi = -wi / denom;
            }
            kinetic += mk[c] * ham.legendre(c, &q[..dim]);
        }
        total += dt * (kinetic * vol + f.potential_of(mk));
    }
    Ok(total + g.potential_of(m.slice(time.steps())))
}

/// `int int mbar |wbar/mbar - w/m|^2` with floored denominators.
pub fn decrease_quantity(mbar: &DensityFlow, wbar: &VectorFlow, m: &DensityFlow, w: &VectorFlow, m_floor: f64) -> Result<f64> {
    mbar.grid().check_same(m.grid())?;
    mbar.time().check_same(m.time())?;
    let grid = *m.grid();
    let time = *m.time();
    let dim = grid.dim();
    let mut total = 0.0;
    for k in 0..time.steps() {
        let (mb, wb, mr, wr) = (mbar.slice(k), wbar.slice(k), m.slice(k), w.slice(k));
        let mut s = 0.0;
        for c in 0..grid.cells() {
            let (db, dr) = (mb[c].max(m_floor), mr[c].max(m_floor));
            let gap: f64 = (0..dim)
                .map(|i| (wb[c * dim + i] / db - wr[c * dim + i] / dr).powi(2))
                .sum();
            s += mb[c] * gap;
        }
        total += time.dt() * s * grid.cell_volume();
    }
    Ok(total)
}

/// Fixed-point residuals `(hjb, fp)` of a pair `(u, m)`: the HJB defect of `u`
/// with the couplings evaluated at `m` itself, and the FP defect of `m` under
/// the drift of `u`, both in rate form.
pub fn mfg_residual(u: &ScalarFlow, m: &DensityFlow, problem: &ParabolicProblem) -> Result<(f64, f64)> {
    let source = coupling_flow(&problem.f, m, problem.exec)?;
    let mut terminal = vec![0.0; m.grid().cells()];
    problem.g.eval_into(m.slice(m.time().steps()), &mut terminal);
    let hjb = hjb_residual(u, &terminal, &source, &problem.ham, &problem.scheme)?;
    let fp = fp_residual(m, u, &problem.m0, &problem.ham, &problem.scheme, problem.exec)?;
    Ok((hjb, fp))
}

/// The last realized stage.
#[derive(Debug, Clone)]
pub struct Realized {
    pub u: ScalarFlow,
    pub grad: VectorFlow,
    pub m: DensityFlow,
    pub w: VectorFlow,
}

/// `(|du|, |d grad u|, |dm|, |dw|)` sup-norm changes between two stages.
pub fn step_variation(prev: &Realized, next: &Realized) -> Result<[f64; 4]> {
    Ok([
        next.u.sup_diff(&prev.u)?,
        next.grad.sup_diff(&prev.grad)?,
        next.m.sup_diff(&prev.m)?,
        next.w.sup_diff(&prev.w)?,
    ])
}

/// Loop state after `n` stages.
#[derive(Debug, Clone)]
pub struct ParabolicState {
    n: usize,
    belief: DensityFlow,
    flux: VectorFlow,
    last: Option<Realized>,
    records: Vec<IterationRecord>,
    stop: StopRule,
    termination: Option<Termination>,
}

impl ParabolicState {
    /// Stage-0 state with the given initial belief.
    pub fn new(problem: &ParabolicProblem, initial: DensityFlow) -> Result<Self> {
        initial.grid().check_same(problem.grid())?;
        initial.time().check_same(&problem.time)?;
        let flux = VectorFlow::zeros(*problem.grid(), problem.time);
        Ok(Self {
            n: 0,
            belief: initial,
            flux,
            last: None,
            records: Vec::new(),
            stop: StopRule::default(),
            termination: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn belief(&self) -> &DensityFlow {
        &self.belief
    }

    pub fn flux(&self) -> &VectorFlow {
        &self.flux
    }

    pub fn last(&self) -> Option<&Realized> {
        self.last.as_ref()
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    /// One stage: `u = HJB(mbar)`, `(m, w) = FP(u)`, then the belief update.
    pub fn iterate(&mut self, problem: &ParabolicProblem) -> Result<&IterationRecord> {
        let n = self.n + 1;
        let stage = |e: Error| e.at_iteration(n);
        let u = problem.best_response(&self.belief).map_err(stage)?;
        let (m, w) = problem.realize(&u).map_err(stage)?;
        let grad = centered_gradient(&u, problem.exec);
        let next = Realized { u, grad, m, w };

        match problem.play.belief {
            BeliefRule::Average => {
                self.belief.fold_average(&next.m, self.n);
                self.flux.fold_average(&next.w, self.n);
            }
            BeliefRule::Last => {
                self.belief = next.m.clone();
                self.flux = next.w.clone();
            }
        }

        let m_floor = problem.play.m_floor;
        let phi = phi_parabolic(&self.belief, &self.flux, &problem.f, &problem.g, &problem.ham, m_floor)?;
        let a_n = decrease_quantity(&self.belief, &self.flux, &next.m, &next.w, m_floor)?;
        let (variation, repeated) = match &self.last {
            Some(prev) => (step_variation(prev, &next)?, prev.m == next.m && prev.w == next.w),
            None => ([0.0; 4], false),
        };
        let (residual_hjb, residual_fp) = mfg_residual(&next.u, &next.m, problem)?;
        let record = IterationRecord {
            n,
            phi,
            a_n,
            du_inf: variation[0],
            dgrad_inf: variation[1],
            dm_inf: variation[2],
            dw_inf: variation[3],
            residual_hjb,
            residual_fp,
        };
        record.check_finite()?;
        log::debug!("stage {n}: phi {phi:.6e} a_n {a_n:.3e}");
        self.n = n;
        self.last = Some(next);
        self.termination = self.stop.update(&problem.play, n, a_n, repeated);
        self.records.push(record);
        Ok(self.records.last().expect("record just pushed"))
    }

    pub fn into_report(self) -> Result<PlayReport> {
        let residual = match self.records.last() {
            Some(r) => (r.residual_hjb, r.residual_fp),
            None => return Err(Error::Validation("no stage has been run".into())),
        };
        Ok(PlayReport {
            records: self.records,
            termination: self.termination.unwrap_or(Termination::IterationLimit),
            belief: self.belief,
            residual,
        })
    }
}

/// Runs stages until the stopping rule fires.
pub fn run_parabolic(problem: &ParabolicProblem, initial: DensityFlow) -> Result<(PlayReport, Realized)> {
    let mut state = ParabolicState::new(problem, initial)?;
    while state.termination().is_none() {
        state.iterate(problem)?;
    }
    let realized = state.last().cloned().expect("at least one stage ran");
    Ok((state.into_report()?, realized))
}

/// Settings of the damped fixed-point solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DampedOptions {
    fn default() -> Self {
        Self { damping: 0.5, tol: 1e-11, max_iter: 5000 }
    }
}

/// Result of the damped fixed-point solver.
#[derive(Debug, Clone)]
pub struct DampedSolution {
    pub u: ScalarFlow,
    pub m: DensityFlow,
    pub iterations: usize,
    /// Final sup-norm change of the density iterate.
    pub step: f64,
}

/// Solves the MFG system directly: `m <- (1 - s) m + s FP(HJB(m))`, halving
/// `s` whenever the step grows. Returns `u = HJB(m)` and `m' = FP(u)`.
pub fn solve_mfg_damped(problem: &ParabolicProblem, initial: DensityFlow, options: DampedOptions) -> Result<DampedSolution> {
    let mut m = initial;
    let mut s = options.damping;
    let mut last_step = f64::INFINITY;
    for it in 1..=options.max_iter {
        let u = problem.best_response(&m)?;
        let (target, _) = problem.realize(&u)?;
        let step = target.sup_diff(&m)?;
        if step < options.tol {
            return Ok(DampedSolution { u, m: target, iterations: it, step });
        }
        if step > last_step {
            s *= 0.5;
        }
        last_step = step;
        m.fold_weighted(&target, s);
    }
    Err(Error::Scheme(format!(
        "damped fixed point did not reach {} in {} iterations (last step {last_step:e})",
        options.tol, options.max_iter
    )))
}
