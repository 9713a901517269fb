//! First-order fictitious play on grid trajectories.
//!
//! Velocities are integer cell displacements per time step, so the dynamic
//! program moves exactly between cells and pushforwards conserve mass
//! exactly. The curve measure is carried by sufficient statistics: the
//! averaged density flow and the averaged kinetic cost.

use crate::coupling::{coupling_flow, integrate, Coupling, ConvolutionCoupling};
use crate::error::{Error, Result};
use crate::geometry::{sup_t_d1_with, DensityFlow, ProbabilityVector, ScalarFlow, TimeGrid, TorusGrid, VectorFlow};
use crate::hamiltonian::QuadraticHamiltonian;
use crate::hjb::centered_gradient;
use crate::par::Exec;
use crate::report::{BeliefRule, IterationRecord, PlayConfig, PlayReport, StopRule, Termination};

/// Admissible per-step displacements, ordered by the argmin tie-break:
/// smallest squared length first, then negative before positive per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSet {
    dim: usize,
    moves: Vec<[i32; 2]>,
}

impl ControlSet {
    /// Every displacement with components in `[-j_max, j_max]`.
    pub fn new(dim: usize, j_max: usize) -> Result<Self> {
        let j = j_max as i32;
        let second = if dim == 2 { -j..=j } else { 0..=0 };
        let mut moves = Vec::new();
        for b in second {
            for a in -j..=j {
                moves.push([a, b]);
            }
        }
        Self::from_moves(dim, moves)
    }

    pub fn from_moves(dim: usize, mut moves: Vec<[i32; 2]>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::Validation(format!("control dimension must be 1 or 2, got {dim}")));
        }
        if moves.is_empty() {
            return Err(Error::Validation("empty control set".into()));
        }
        if dim == 1 && moves.iter().any(|m| m[1] != 0) {
            return Err(Error::Validation("1D controls must have a zero second component".into()));
        }
        if !moves.contains(&[0, 0]) {
            return Err(Error::Validation("control set must contain the zero move".into()));
        }
        moves.sort_by_key(|m| (m[0] * m[0] + m[1] * m[1], m[0].abs(), m[0] > 0, m[1].abs(), m[1] > 0));
        moves.dedup();
        Ok(Self { dim, moves })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    pub fn moves(&self) -> &[[i32; 2]] {
        &self.moves
    }

    /// Largest component magnitude.
    pub fn j_max(&self) -> usize {
        self.moves.iter().map(|m| m[0].unsigned_abs().max(m[1].unsigned_abs())).max().unwrap_or(0) as usize
    }

    pub fn index_of(&self, mv: [i32; 2]) -> Option<usize> {
        self.moves.iter().position(|m| *m == mv)
    }

    /// Velocity `j h / dt` of move `idx`.
    pub fn velocity(&self, idx: usize, grid: &TorusGrid, time: &TimeGrid) -> [f64; 2] {
        let s = grid.h() / time.dt();
        let m = self.moves[idx];
        [m[0] as f64 * s, m[1] as f64 * s]
    }
}

/// Cells visited at each time node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    cells: Vec<usize>,
}

impl Trajectory {
    pub fn new(cells: Vec<usize>) -> Self {
        Self { cells }
    }

    /// Starts at `start` and applies `moves` in order.
    pub fn from_moves(grid: &TorusGrid, start: usize, moves: &[[i32; 2]]) -> Self {
        let mut cells = Vec::with_capacity(moves.len() + 1);
        cells.push(start);
        for m in moves {
            let last = *cells.last().expect("non-empty");
            cells.push(grid.displace(last, &m[..grid.dim()]));
        }
        Self { cells }
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn start(&self) -> usize {
        self.cells[0]
    }

    /// Wrapped displacement of every step.
    pub fn moves(&self, grid: &TorusGrid) -> Vec<[i32; 2]> {
        self.cells
            .windows(2)
            .map(|p| {
                let mut m = [0i32; 2];
                for (axis, mi) in m.iter_mut().enumerate().take(grid.dim()) {
                    *mi = grid.wrapped_offset(p[0], p[1], axis) as i32;
                }
                m
            })
            .collect()
    }
}

/// `f(., m(t_k))` for all nodes and `g(., m(T))`.
#[derive(Debug, Clone)]
pub struct CouplingFields {
    pub f: ScalarFlow,
    pub g: Vec<f64>,
}

/// Everything a first-order run needs.
#[derive(Debug, Clone)]
pub struct FirstOrderProblem {
    pub m0: ProbabilityVector,
    pub ham: QuadraticHamiltonian,
    pub f: ConvolutionCoupling,
    pub g: ConvolutionCoupling,
    pub time: TimeGrid,
    pub controls: ControlSet,
    pub play: PlayConfig,
    /// Stages kept in the trajectory bank; 0 disables it.
    pub bank_cap: usize,
    pub exec: Exec,
}

impl FirstOrderProblem {
    /// `j_max` defaults to `ceil(v_max dt / h)` with the speed bound
    /// `v_max = Lip(g) + T Lip(f) + 1`.
    pub fn new(
        m0: ProbabilityVector,
        ham: QuadraticHamiltonian,
        f: ConvolutionCoupling,
        g: ConvolutionCoupling,
        time: TimeGrid,
        j_max: Option<usize>,
        play: PlayConfig,
    ) -> Result<Self> {
        let grid = *m0.grid();
        grid.check_same(ham.grid())?;
        grid.check_same(f.grid())?;
        grid.check_same(g.grid())?;
        play.validate()?;
        let speed = speed_bound(&f, &g, time.horizon());
        let j_max = j_max.unwrap_or_else(|| (speed * time.dt() / grid.h() - 1e-9).ceil().max(1.0) as usize);
        if 2 * j_max >= grid.points() {
            return Err(Error::Config(format!(
                "maximal displacement {j_max} cells per step wraps around a torus of {} cells; use more time steps",
                grid.points()
            )));
        }
        let controls = ControlSet::new(grid.dim(), j_max)?;
        Ok(Self { m0, ham, f, g, time, controls, play, bank_cap: 0, exec: Exec::default() })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.m0.grid()
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_controls(mut self, controls: ControlSet) -> Result<Self> {
        if controls.dim() != self.grid().dim() {
            return Err(Error::Dimension("control dimension differs from the grid".into()));
        }
        self.controls = controls;
        Ok(self)
    }

    pub fn with_bank(mut self, cap: usize) -> Self {
        self.bank_cap = cap;
        self
    }

    pub fn with_m0(mut self, m0: ProbabilityVector) -> Result<Self> {
        self.grid().check_same(m0.grid())?;
        self.m0 = m0;
        Ok(self)
    }

    pub fn fields(&self, m: &DensityFlow) -> Result<CouplingFields> {
        self.grid().check_same(m.grid())?;
        self.time.check_same(m.time())?;
        let f = coupling_flow(&self.f, m, self.exec)?;
        let mut g = vec![0.0; self.grid().cells()];
        self.g.eval_into(m.slice(self.time.steps()), &mut g);
        Ok(CouplingFields { f, g })
    }

    /// `dt L(x, v)` for every cell and move, laid out `[cell][move]`.
    fn step_costs(&self) -> Vec<f64> {
        let grid = *self.grid();
        let dim = grid.dim();
        let dt = self.time.dt();
        let mut out = Vec::with_capacity(grid.cells() * self.controls.len());
        for c in 0..grid.cells() {
            for j in 0..self.controls.len() {
                let v = self.controls.velocity(j, &grid, &self.time);
                out.push(dt * self.ham.lagrangian(c, &v[..dim]));
            }
        }
        out
    }

    /// Kinetic cost `sum_k dt L(x_k, v_k)` of a trajectory.
    pub fn kinetic_cost(&self, traj: &Trajectory) -> Result<f64> {
        let grid = *self.grid();
        let dim = grid.dim();
        self.check_trajectory(traj)?;
        let dt = self.time.dt();
        let s = grid.h() / dt;
        Ok(traj
            .cells()
            .iter()
            .zip(traj.moves(&grid))
            .map(|(c, m)| {
                let v = [m[0] as f64 * s, m[1] as f64 * s];
                dt * self.ham.lagrangian(*c, &v[..dim])
            })
            .sum())
    }

    fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.cells().len() != self.time.nodes() {
            return Err(Error::Dimension(format!(
                "trajectory has {} nodes, time grid has {}",
                traj.cells().len(),
                self.time.nodes()
            )));
        }
        if traj.cells().iter().any(|c| *c >= self.grid().cells()) {
            return Err(Error::Validation("trajectory leaves the grid".into()));
        }
        if let Some(m) = traj.moves(self.grid()).into_iter().find(|m| self.controls.index_of(*m).is_none()) {
            return Err(Error::Validation(format!("displacement {m:?} is not an admissible control")));
        }
        Ok(())
    }

    /// `J = sum_k dt [L(x_k, v_k) + f(x_k, m(t_k))] + g(x_K, m(T))`.
    pub fn cost_j(&self, traj: &Trajectory, m: &DensityFlow) -> Result<f64> {
        let fields = self.fields(m)?;
        self.cost_with(traj, &fields)
    }

    pub fn cost_with(&self, traj: &Trajectory, fields: &CouplingFields) -> Result<f64> {
        let kinetic = self.kinetic_cost(traj)?;
        let dt = self.time.dt();
        let cells = traj.cells();
        let running: f64 = (0..self.time.steps()).map(|k| dt * fields.f.slice(k)[cells[k]]).sum();
        Ok(kinetic + running + fields.g[cells[self.time.steps()]])
    }
}

/// `Lip(g) + T Lip(f) + 1`: a bound on optimal speeds for the quadratic cost.
pub fn speed_bound(f: &ConvolutionCoupling, g: &ConvolutionCoupling, horizon: f64) -> f64 {
    g.lipschitz_bound() + horizon * f.lipschitz_bound() + 1.0
}

/// Value table and optimal feedback against one belief.
#[derive(Debug, Clone)]
pub struct BestResponse {
    belief_stage: usize,
    value: ScalarFlow,
    /// Move index for each `(k, cell)`, `k < K`.
    policy: Vec<u32>,
}

impl BestResponse {
    /// Stage of the belief this response was computed against.
    pub fn belief_stage(&self) -> usize {
        self.belief_stage
    }

    pub fn value(&self) -> &ScalarFlow {
        &self.value
    }

    pub fn policy(&self, k: usize, cell: usize) -> usize {
        self.policy[k * self.value.grid().cells() + cell] as usize
    }

    /// Optimal trajectory from `start` under the feedback policy.
    pub fn trajectory(&self, start: usize, controls: &ControlSet) -> Trajectory {
        let grid = *self.value.grid();
        let steps = self.value.time().steps();
        let mut cells = Vec::with_capacity(steps + 1);
        cells.push(start);
        for k in 0..steps {
            let c = cells[k];
            let m = controls.moves()[self.policy(k, c)];
            cells.push(grid.displace(c, &m[..grid.dim()]));
        }
        Trajectory::new(cells)
    }

    /// Whether some choice uses the largest admissible displacement.
    pub fn saturates(&self, controls: &ControlSet) -> bool {
        let j = controls.j_max() as i32;
        self.policy
            .iter()
            .any(|p| controls.moves()[*p as usize].iter().any(|c| c.abs() == j && j > 0))
    }
}

/// Backward dynamic program against a belief flow, stamped with stage 0.
pub fn bellman_best_response(problem: &FirstOrderProblem, m: &DensityFlow) -> Result<BestResponse> {
    let fields = problem.fields(m)?;
    Ok(best_response_with(problem, &fields, 0))
}

fn best_response_with(problem: &FirstOrderProblem, fields: &CouplingFields, stage: usize) -> BestResponse {
    let grid = *problem.grid();
    let time = problem.time;
    let cells = grid.cells();
    let steps = time.steps();
    let nm = problem.controls.len();
    let costs = problem.step_costs();
    let targets: Vec<usize> = (0..cells)
        .flat_map(|c| problem.controls.moves().iter().map(move |m| grid.displace(c, &m[..grid.dim()])))
        .collect();
    let dt = time.dt();
    let mut value = ScalarFlow::zeros(grid, time);
    value.slice_mut(steps).copy_from_slice(&fields.g);
    let mut policy = vec![0u32; steps * cells];
    for k in (0..steps).rev() {
        let next = value.slice(k + 1).to_vec();
        let f = fields.f.slice(k);
        let best = problem.exec.map_cells(cells, |c| {
            let mut arg = 0;
            let mut low = f64::INFINITY;
            for j in 0..nm {
                let v = costs[c * nm + j] + next[targets[c * nm + j]];
                if v < low {
                    low = v;
                    arg = j;
                }
            }
            (low + dt * f[c], arg as u32)
        });
        let slot = value.slice_mut(k);
        for (c, (v, arg)) in best.into_iter().enumerate() {
            slot[c] = v;
            policy[k * cells + c] = arg;
        }
    }
    BestResponse { belief_stage: stage, value, policy }
}

/// `max |u(k,x) - min_v (dt [L + f] + u(k+1, x + v))|` including the terminal
/// mismatch, with the couplings evaluated at `m`.
pub fn bellman_residual(value: &ScalarFlow, m: &DensityFlow, problem: &FirstOrderProblem) -> Result<f64> {
    let fields = problem.fields(m)?;
    let mut worst = value
        .slice(problem.time.steps())
        .iter()
        .zip(&fields.g)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let grid = *problem.grid();
    let nm = problem.controls.len();
    let costs = problem.step_costs();
    let dt = problem.time.dt();
    for k in 0..problem.time.steps() {
        let (cur, next, f) = (value.slice(k), value.slice(k + 1), fields.f.slice(k));
        for c in 0..grid.cells() {
            let best = (0..nm)
                .map(|j| {
                    let m = problem.controls.moves()[j];
                    costs[c * nm + j] + next[grid.displace(c, &m[..grid.dim()])]
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((cur[c] - best - dt * f[c]).abs());
        }
    }
    Ok(worst)
}

/// Realized flow of a best response started from `m0`.
#[derive(Debug, Clone)]
pub struct Pushforward {
    pub flow: DensityFlow,
    /// `int sum_k dt L(gamma, gamma') dm0`.
    pub kinetic: f64,
    /// `m * v` on every slice (last slice zero).
    pub momentum: VectorFlow,
}

/// Pushes `m0` along the feedback policy.
pub fn pushforward(br: &BestResponse, m0: &ProbabilityVector, problem: &FirstOrderProblem) -> Result<Pushforward> {
    let grid = *problem.grid();
    grid.check_same(m0.grid())?;
    let time = problem.time;
    let dim = grid.dim();
    let dt = time.dt();
    let vol = grid.cell_volume();
    let mut flow = DensityFlow::zeros(grid, time);
    let mut momentum = VectorFlow::zeros(grid, time);
    flow.slice_mut(0).copy_from_slice(m0.as_slice());
    let mut kinetic = 0.0;
    for k in 0..time.steps() {
        let cur = flow.slice(k).to_vec();
        let mut next = vec![0.0; grid.cells()];
        let mom = momentum.slice_mut(k);
        for (c, mc) in cur.iter().enumerate() {
            if *mc == 0.0 {
                continue;
            }
            let j = br.policy(k, c);
            let mv = problem.controls.moves()[j];
            let v = problem.controls.velocity(j, &grid, &time);
            next[grid.displace(c, &mv[..dim])] += mc;
            kinetic += dt * vol * mc * problem.ham.lagrangian(c, &v[..dim]);
            for i in 0..dim {
                mom[c * dim + i] = mc * v[i];
            }
        }
        flow.slice_mut(k + 1).copy_from_slice(&next);
    }
    Ok(Pushforward { flow, kinetic, momentum })
}

/// Trajectories of every stage, for recomputing statistics from curves.
#[derive(Debug, Clone)]
pub struct TrajectoryBank {
    starts: Vec<usize>,
    weights: Vec<f64>,
    stages: Vec<Vec<Trajectory>>,
    cap: usize,
    truncated: bool,
}

impl TrajectoryBank {
    fn new(m0: &ProbabilityVector, cap: usize) -> Self {
        let vol = m0.grid().cell_volume();
        let (starts, weights) = m0
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(c, w)| (c, w * vol))
            .unzip();
        Self { starts, weights, stages: Vec::new(), cap, truncated: false }
    }

    fn record(&mut self, br: &BestResponse, controls: &ControlSet, rule: BeliefRule) {
        if rule == BeliefRule::Last {
            self.stages.clear();
        }
        if self.stages.len() >= self.cap {
            self.truncated = true;
            return;
        }
        self.stages.push(self.starts.iter().map(|s| br.trajectory(*s, controls)).collect());
    }

    pub fn stages(&self) -> &[Vec<Trajectory>] {
        &self.stages
    }

    /// Starting cells and their probability weights.
    pub fn starts(&self) -> (&[usize], &[f64]) {
        (&self.starts, &self.weights)
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    fn check_complete(&self) -> Result<()> {
        if self.truncated || self.stages.is_empty() {
            return Err(Error::Validation("trajectory bank is empty or truncated".into()));
        }
        Ok(())
    }

    /// Time marginals of the uniform mixture of stored stages.
    pub fn belief(&self, problem: &FirstOrderProblem) -> Result<DensityFlow> {
        self.check_complete()?;
        let grid = *problem.grid();
        let mut flow = DensityFlow::zeros(grid, problem.time);
        let scale = 1.0 / (self.stages.len() as f64 * grid.cell_volume());
        for stage in &self.stages {
            for (traj, w) in stage.iter().zip(&self.weights) {
                for (k, c) in traj.cells().iter().enumerate() {
                    flow.slice_mut(k)[*c] += w * scale;
                }
            }
        }
        Ok(flow)
    }

    fn mean_over(&self, cost: impl Fn(&Trajectory) -> Result<f64>) -> Result<f64> {
        self.check_complete()?;
        let mut total = 0.0;
        for stage in &self.stages {
            for (traj, w) in stage.iter().zip(&self.weights) {
                total += w * cost(traj)?;
            }
        }
        Ok(total / self.stages.len() as f64)
    }

    pub fn kinetic(&self, problem: &FirstOrderProblem) -> Result<f64> {
        self.mean_over(|t| problem.kinetic_cost(t))
    }

    /// Potential of the stored curve measure.
    pub fn phi(&self, problem: &FirstOrderProblem) -> Result<f64> {
        let belief = self.belief(problem)?;
        Ok(self.kinetic(problem)? + coupling_potential(problem, &belief))
    }

    /// `int J d eta - int u(0) dm0`, with `J` summed trajectory by trajectory.
    pub fn exploitability(&self, br: &BestResponse, problem: &FirstOrderProblem) -> Result<f64> {
        let fields = problem.fields(&self.belief(problem)?)?;
        let expected = self.mean_over(|t| problem.cost_with(t, &fields))?;
        Ok(expected - integrate(problem.grid(), br.value().slice(0), problem.m0.as_slice()))
    }
}

/// `sum_k dt F(m(t_k)) + G(m(T))`, left-endpoint rule.
fn coupling_potential(problem: &FirstOrderProblem, m: &DensityFlow) -> f64 {
    let dt = problem.time.dt();
    let steps = problem.time.steps();
    (0..steps).map(|k| dt * problem.f.potential_of(m.slice(k))).sum::<f64>() + problem.g.potential_of(m.slice(steps))
}

#[derive(Debug, Clone)]
struct Stage {
    value: ScalarFlow,
    grad: VectorFlow,
    push: Pushforward,
}

/// Sufficient statistics of the curve measure after `n` stages.
#[derive(Debug, Clone)]
pub struct StrategyState {
    n: usize,
    belief: DensityFlow,
    kinetic: f64,
    bank: Option<TrajectoryBank>,
    last: Option<Stage>,
    last_response: Option<BestResponse>,
    records: Vec<IterationRecord>,
    stop: StopRule,
    termination: Option<Termination>,
}

impl StrategyState {
    /// Stage 0: every player stays at its starting cell.
    pub fn new(problem: &FirstOrderProblem) -> Self {
        let belief = DensityFlow::constant(&problem.m0, problem.time);
        Self::with_belief(problem, belief).expect("constant flow matches the problem grids")
    }

    /// Stage 0 with a custom belief flow, read as players resting at their
    /// `t = 0` positions for the kinetic term.
    pub fn with_belief(problem: &FirstOrderProblem, belief: DensityFlow) -> Result<Self> {
        belief.grid().check_same(problem.grid())?;
        belief.time().check_same(&problem.time)?;
        let grid = *problem.grid();
        let zero = [0.0; 2];
        let rest: Vec<f64> = (0..grid.cells()).map(|c| problem.ham.lagrangian(c, &zero[..grid.dim()])).collect();
        let kinetic = problem.time.horizon() * integrate(&grid, &rest, belief.slice(0));
        let bank = (problem.bank_cap > 0).then(|| TrajectoryBank::new(&problem.m0, problem.bank_cap));
        Ok(Self {
            n: 0,
            belief,
            kinetic,
            bank,
            last: None,
            last_response: None,
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

    /// Averaged kinetic cost of the curve measure.
    pub fn kinetic(&self) -> f64 {
        self.kinetic
    }

    pub fn bank(&self) -> Option<&TrajectoryBank> {
        self.bank.as_ref()
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    /// Best response computed in the latest stage (against the previous belief).
    pub fn last_response(&self) -> Option<&BestResponse> {
        self.last_response.as_ref()
    }

    /// Flow realized in the latest stage.
    pub fn last_flow(&self) -> Option<&DensityFlow> {
        self.last.as_ref().map(|s| &s.push.flow)
    }

    /// Best response against the current belief, stamped with the current stage.
    pub fn best_response(&self, problem: &FirstOrderProblem) -> Result<BestResponse> {
        let fields = problem.fields(&self.belief)?;
        Ok(best_response_with(problem, &fields, self.n))
    }

    /// One stage: best response to the belief, pushforward of `m0`, averaging.
    pub fn play_step(&mut self, problem: &FirstOrderProblem) -> Result<&IterationRecord> {
        let n = self.n + 1;
        let fields = problem.fields(&self.belief)?;
        let br = best_response_with(problem, &fields, self.n);
        if br.saturates(&problem.controls) {
            log::warn!("stage {n}: optimal policy uses the largest displacement {}", problem.controls.j_max());
        }
        let a_n = exploitability_with(self, &br, &fields, problem)?;
        let push = pushforward(&br, &problem.m0, problem)?;
        if let Some(bank) = &mut self.bank {
            bank.record(&br, &problem.controls, problem.play.belief);
        }
        match problem.play.belief {
            BeliefRule::Average => {
                self.belief.fold_average(&push.flow, self.n);
                self.kinetic = if self.n == 0 {
                    push.kinetic
                } else {
                    self.kinetic + (push.kinetic - self.kinetic) / (self.n as f64 + 1.0)
                };
            }
            BeliefRule::Last => {
                self.belief = push.flow.clone();
                self.kinetic = push.kinetic;
            }
        }
        self.n = n;
        let phi = phi_eta(self, problem);
        let grad = centered_gradient(br.value(), problem.exec);
        let stage = Stage { value: br.value().clone(), grad, push };
        let (variation, repeated) = match &self.last {
            Some(prev) => (
                [
                    stage.value.sup_diff(&prev.value)?,
                    stage.grad.sup_diff(&prev.grad)?,
                    stage.push.flow.sup_diff(&prev.push.flow)?,
                    stage.push.momentum.sup_diff(&prev.push.momentum)?,
                ],
                prev.push.flow == stage.push.flow && prev.value == stage.value,
            ),
            None => ([0.0; 4], false),
        };
        let residual_hjb = bellman_residual(&stage.value, &self.belief, problem)?;
        let residual_fp = sup_t_d1_with(problem.exec, &stage.push.flow, &self.belief)?;
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
        self.last = Some(stage);
        self.last_response = Some(br);
        self.termination = self.stop.update(&problem.play, n, a_n, repeated);
        self.records.push(record);
        Ok(self.records.last().expect("record just pushed"))
    }
}

/// `K + sum_k dt F(mbar(t_k)) + G(mbar(T))`.
pub fn phi_eta(state: &StrategyState, problem: &FirstOrderProblem) -> f64 {
    state.kinetic + coupling_potential(problem, &state.belief)
}

/// `int J d eta^n - min_theta int J d theta` for a best response to the
/// current belief; errors if `br` was computed against another stage.
pub fn exploitability(state: &StrategyState, br: &BestResponse, problem: &FirstOrderProblem) -> Result<f64> {
    let fields = problem.fields(&state.belief)?;
    exploitability_with(state, br, &fields, problem)
}

fn exploitability_with(state: &StrategyState, br: &BestResponse, fields: &CouplingFields, problem: &FirstOrderProblem) -> Result<f64> {
    if br.belief_stage != state.n {
        return Err(Error::StaleBestResponse { computed_at: br.belief_stage, current: state.n });
    }
    let grid = *problem.grid();
    let dt = problem.time.dt();
    let steps = problem.time.steps();
    let running: f64 = (0..steps)
        .map(|k| dt * integrate(&grid, fields.f.slice(k), state.belief.slice(k)))
        .sum();
    let expected = state.kinetic + running + integrate(&grid, &fields.g, state.belief.slice(steps));
    let best = integrate(&grid, br.value().slice(0), problem.m0.as_slice());
    Ok(expected - best)
}

/// Result of a complete first-order run.
#[derive(Debug, Clone)]
pub struct FirstOrderOutcome {
    pub report: PlayReport,
    /// Best response of the final stage.
    pub response: BestResponse,
    /// `sup_t d1` between the pushforward of a fresh best response to the
    /// final belief and the belief itself.
    pub equilibrium_gap: f64,
    pub bank: Option<TrajectoryBank>,
}

pub fn run_first_order(problem: &FirstOrderProblem, mut state: StrategyState) -> Result<FirstOrderOutcome> {
    while state.termination().is_none() {
        let n = state.n() + 1;
        state.play_step(problem).map_err(|e| e.at_iteration(n))?;
    }
    let fresh = state.best_response(problem)?;
    let push = pushforward(&fresh, &problem.m0, problem)?;
    let equilibrium_gap = sup_t_d1_with(problem.exec, &push.flow, &state.belief)?;
    let last = state.records.last().expect("at least one stage");
    let residual = (last.residual_hjb, last.residual_fp);
    let response = state.last_response.clone().expect("at least one stage");
    Ok(FirstOrderOutcome {
        report: PlayReport {
            residual,
            termination: state.termination.expect("loop ended"),
            belief: state.belief,
            records: state.records,
        },
        response,
        equilibrium_gap,
        bank: state.bank,
    })
}
