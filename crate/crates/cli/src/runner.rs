//! Runs a configuration end to end and writes its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fplay_core::diagnostics::{cesaro_check, fit_decay, potential_trend, DecayFit, DecayModel, PotentialTrend, DEFAULT_TAIL_FRACTION};
use fplay_core::fokker_planck::linf_track;
use fplay_core::geometry::{sup_t_d1_with, DensityFlow, TorusGrid};
use fplay_core::nplayer::{compare_to_mfg, place_players, run_nplayer};
use fplay_core::parabolic::run_parabolic;
use fplay_core::report::{PlayReport, Termination};
use fplay_core::trajectory::{run_first_order, FirstOrderOutcome, FirstOrderProblem, StrategyState, Trajectory};
use fplay_core::Exec;
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::output::{
    density_csv, iterations_csv, slice_indices, trajectories_csv, write_file, write_json, DENSITY_FILE,
    ITERATIONS_FILE, REPORT_FILE, TRAJECTORY_FILE,
};
use crate::plot::{heatmap, line_chart};
use crate::CliError;

/// Exit status of a run that produced outputs.
pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ITERATION_LIMIT: i32 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct GridInfo {
    pub dim: usize,
    pub points: usize,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeInfo {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "K")]
    pub steps: usize,
    pub dt: f64,
    /// Time nodes written to the density file.
    pub written_slices: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeInfo {
    pub theta: f64,
    pub cfl_safety: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControlInfo {
    pub j_max: usize,
    pub max_speed: f64,
    /// The final policy uses the largest displacement somewhere.
    pub saturated: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CesaroInfo {
    pub average_final: f64,
    pub average_half: f64,
    pub summable: bool,
    pub tail_share: f64,
}

/// Diagnostics of one fictitious-play loop.
#[derive(Debug, Clone, Serialize)]
pub struct LoopSummary {
    pub label: String,
    pub termination: Termination,
    pub iterations: usize,
    /// First meaningful decrease quantity: stage 2 for the parabolic loop,
    /// whose stage-1 value is zero by construction, and stage 1 otherwise.
    pub a_initial: f64,
    pub a_final: f64,
    pub a_min: f64,
    pub phi_first: f64,
    pub phi_final: f64,
    pub potential_trend: Option<PotentialTrend>,
    pub cesaro: CesaroInfo,
    /// `c / n` fit of the sup-norm change of the value function.
    pub value_variation_fit: Option<DecayFit>,
    pub residual_hjb: f64,
    pub residual_fp: f64,
    pub residual_tolerance: Option<f64>,
    pub equilibrium_gap: Option<f64>,
    pub max_mass_drift: f64,
    pub min_density: f64,
    pub max_density: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub directory: String,
    pub sup_t_d1_to_primary: f64,
    #[serde(flatten)]
    pub summary: LoopSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct PopulationSummary {
    pub players: usize,
    pub directory: String,
    pub d1_to_m0: f64,
    pub distance_to_mfg: f64,
    #[serde(flatten)]
    pub summary: LoopSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub exit_code: i32,
    pub grid: GridInfo,
    pub time: TimeInfo,
    pub scheme: Option<SchemeInfo>,
    pub controls: Option<ControlInfo>,
    pub primary: LoopSummary,
    pub seeds: Vec<SeedSummary>,
    pub populations: Vec<PopulationSummary>,
}

fn a_initial(mode: Mode, records: &[f64]) -> f64 {
    match mode {
        Mode::Parabolic if records.len() > 1 => records[1],
        _ => records.first().copied().unwrap_or(0.0),
    }
}

fn summarize(
    label: String,
    mode: Mode,
    report: &PlayReport,
    residual_tolerance: Option<f64>,
    equilibrium_gap: Option<f64>,
) -> Result<LoopSummary, CliError> {
    let a = report.a_history();
    let phi = report.phi_history();
    // Stage-1 parabolic decrease is zero by construction; rounding-level
    // negative exploitability counts as zero.
    let skip = usize::from(mode == Mode::Parabolic && a.len() > 1);
    let clamped: Vec<f64> = a[skip..].iter().map(|v| v.max(0.0)).collect();
    let seq = cesaro_check(&clamped, None, DEFAULT_TAIL_FRACTION)?;
    let du: Vec<f64> = report.records.iter().map(|r| r.du_inf).collect();
    let belief = &report.belief;
    Ok(LoopSummary {
        label,
        termination: report.termination,
        iterations: report.iterations(),
        a_initial: a_initial(mode, &a),
        a_final: *a.last().expect("nonempty run"),
        a_min: a[skip..].iter().copied().fold(f64::INFINITY, f64::min),
        phi_first: phi[0],
        phi_final: *phi.last().expect("nonempty run"),
        potential_trend: potential_trend(&phi).ok(),
        cesaro: CesaroInfo {
            average_final: seq.cesaro_final(),
            average_half: seq.cesaro_half(),
            summable: seq.summable,
            tail_share: seq.tail_fraction,
        },
        value_variation_fit: fit_decay(&du, DecayModel::COverN).ok(),
        residual_hjb: report.residual.0,
        residual_fp: report.residual.1,
        residual_tolerance,
        equilibrium_gap,
        max_mass_drift: belief.max_mass_drift(),
        min_density: belief.min_value(),
        max_density: linf_track(belief).into_iter().fold(0.0, f64::max),
    })
}

/// Per-loop artifacts: iteration table, strided density, plots.
fn write_loop(dir: &Path, report: &PlayReport, config: &RunConfig, title: &str) -> Result<usize, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join(ITERATIONS_FILE), &iterations_csv(&report.records)?)?;
    let slices = slice_indices(report.belief.time().steps(), config.output.max_time_slices);
    write_file(&dir.join(DENSITY_FILE), &density_csv(&report.belief, &slices)?)?;
    if config.output.emit_plots {
        write_file(&dir.join("phi.svg"), &line_chart(&format!("{title}: potential"), "phi", &report.phi_history(), false))?;
        write_file(&dir.join("a_n.svg"), &line_chart(&format!("{title}: decrease quantity"), "a_n", &report.a_history(), true))?;
        let rows: Vec<Vec<f64>> = slices.iter().map(|k| first_axis_marginal(&report.belief, *k)).collect();
        write_file(&dir.join("density.svg"), &heatmap(&format!("{title}: final belief"), &rows))?;
    }
    Ok(slices.len())
}

/// Density slice, integrated over the second axis on planar grids.
fn first_axis_marginal(flow: &DensityFlow, k: usize) -> Vec<f64> {
    let grid: TorusGrid = *flow.grid();
    if grid.dim() == 1 {
        return flow.slice(k).to_vec();
    }
    let mut out = vec![0.0; grid.points()];
    for (c, m) in flow.slice(k).iter().enumerate() {
        out[grid.coords(c)[0]] += m * grid.h();
    }
    out
}

fn write_trajectories(dir: &Path, grid: &TorusGrid, trajectories: &[Trajectory], players: bool) -> Result<(), CliError> {
    write_file(&dir.join(TRAJECTORY_FILE), &trajectories_csv(grid, trajectories, players))
}

fn exit_code(all_converged: bool) -> i32 {
    if all_converged {
        EXIT_CONVERGED
    } else {
        EXIT_ITERATION_LIMIT
    }
}

/// Validates the configuration, runs it, writes every output into `out` and
/// returns the report (also written as `report.json`).
pub fn run(config: &RunConfig, config_text: &str, out: &Path, exec: Exec) -> Result<RunReport, CliError> {
    let report = match config.mode {
        Mode::Parabolic => run_parabolic_mode(config, out, exec)?,
        Mode::FirstOrder | Mode::Nplayer => run_trajectory_mode(config, out, exec)?,
    };
    write_file(&out.join("config.toml"), config_text)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn run_parabolic_mode(config: &RunConfig, out: &Path, exec: Exec) -> Result<RunReport, CliError> {
    let problem = config.parabolic_problem()?.with_exec(exec);
    let beliefs = config.initial_beliefs(&problem.m0, problem.time)?;
    prepare(out)?;
    let grid = *problem.grid();
    let (h, dt) = (grid.h(), problem.time.dt());
    log::info!("parabolic run: {} cells, K = {}, theta = {:.4}", grid.cells(), problem.time.steps(), problem.scheme.theta());
    let start = Instant::now();
    let results = exec.map(beliefs.len(), |i| run_parabolic(&problem, beliefs[i].clone()).map(|(r, _)| r));
    log::info!("parabolic runs finished in {:.2?}", start.elapsed());
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let tolerance = Some(10.0 * (h + dt));
    let labels: Vec<String> = config.play.seeds.iter().map(|s| s.label()).collect();
    let written = write_loop(out, &reports[0], config, "parabolic")?;
    let primary = summarize(labels[0].clone(), Mode::Parabolic, &reports[0], tolerance, None)?;
    let mut seeds = Vec::new();
    for (i, r) in reports.iter().enumerate().skip(1) {
        let directory = format!("seed_{i}");
        write_loop(&out.join(&directory), r, config, &labels[i])?;
        seeds.push(SeedSummary {
            directory,
            sup_t_d1_to_primary: sup_t_d1_with(exec, &r.belief, &reports[0].belief)?,
            summary: summarize(labels[i].clone(), Mode::Parabolic, r, tolerance, None)?,
        });
    }
    let converged = reports.iter().all(|r| r.termination.converged());
    Ok(RunReport {
        mode: Mode::Parabolic,
        exit_code: exit_code(converged),
        grid: GridInfo { dim: grid.dim(), points: grid.points(), h },
        time: TimeInfo { horizon: problem.time.horizon(), steps: problem.time.steps(), dt, written_slices: written },
        scheme: Some(SchemeInfo { theta: problem.scheme.theta(), cfl_safety: problem.scheme.cfl_safety() }),
        controls: None,
        primary,
        seeds,
        populations: Vec::new(),
    })
}

fn first_order_with(problem: &FirstOrderProblem, belief: DensityFlow) -> Result<FirstOrderOutcome, CliError> {
    let state = StrategyState::with_belief(problem, belief)?;
    Ok(run_first_order(problem, state)?)
}

fn start_trajectories(problem: &FirstOrderProblem, outcome: &FirstOrderOutcome) -> Vec<Trajectory> {
    (0..problem.grid().cells())
        .filter(|c| problem.m0.as_slice()[*c] > 0.0)
        .map(|c| outcome.response.trajectory(c, &problem.controls))
        .collect()
}

fn run_trajectory_mode(config: &RunConfig, out: &Path, exec: Exec) -> Result<RunReport, CliError> {
    let problem = config.first_order_problem()?.with_exec(exec);
    let beliefs = config.initial_beliefs(&problem.m0, problem.time)?;
    let ladder = match (config.mode, &config.nplayer) {
        (Mode::Nplayer, Some(section)) => {
            if section.players.is_empty() {
                return Err(CliError::Config("nplayer.players must list at least one population size".into()));
            }
            section
                .players
                .iter()
                .map(|n| place_players(&problem.m0, *n, section.placement()))
                .collect::<Result<Vec<_>, _>>()?
        }
        (Mode::Nplayer, None) => return Err(CliError::Config("nplayer mode needs an [nplayer] section".into())),
        _ => Vec::new(),
    };
    prepare(out)?;
    let grid = *problem.grid();
    let (h, dt) = (grid.h(), problem.time.dt());
    log::info!("trajectory run: {} cells, K = {}, j_max = {}", grid.cells(), problem.time.steps(), problem.controls.j_max());
    let start = Instant::now();
    let outcomes = exec
        .map(beliefs.len(), |i| first_order_with(&problem, beliefs[i].clone()))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let populations = exec
        .map(ladder.len(), |i| run_nplayer(&problem, &ladder[i]))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    log::info!("trajectory runs finished in {:.2?}", start.elapsed());

    let labels: Vec<String> = config.play.seeds.iter().map(|s| s.label()).collect();
    let title = if config.mode == Mode::Nplayer { "mean field" } else { "first order" };
    let written = write_loop(out, &outcomes[0].report, config, title)?;
    write_trajectories(out, &grid, &start_trajectories(&problem, &outcomes[0]), false)?;
    let summary_of = |label: &str, o: &FirstOrderOutcome| {
        summarize(label.to_string(), Mode::FirstOrder, &o.report, None, Some(o.equilibrium_gap))
    };
    let primary = summary_of(&labels[0], &outcomes[0])?;
    let mut seeds = Vec::new();
    for (i, o) in outcomes.iter().enumerate().skip(1) {
        let directory = format!("seed_{i}");
        let dir = out.join(&directory);
        write_loop(&dir, &o.report, config, &labels[i])?;
        write_trajectories(&dir, &grid, &start_trajectories(&problem, o), false)?;
        seeds.push(SeedSummary {
            directory,
            sup_t_d1_to_primary: sup_t_d1_with(exec, &o.report.belief, &outcomes[0].report.belief)?,
            summary: summary_of(&labels[i], o)?,
        });
    }
    let mut summaries = Vec::new();
    for (players, pop) in ladder.iter().zip(&populations) {
        let directory = format!("players_{}", players.len());
        let dir = out.join(&directory);
        let label = format!("{} players", players.len());
        write_loop(&dir, &pop.outcome.report, config, &label)?;
        write_trajectories(&dir, &grid, &pop.trajectories, true)?;
        summaries.push(PopulationSummary {
            players: players.len(),
            directory,
            d1_to_m0: players.d1_to_m0(),
            distance_to_mfg: compare_to_mfg(&pop.outcome.report, &outcomes[0].report, exec)?,
            summary: summary_of(&label, &pop.outcome)?,
        });
    }
    let converged = outcomes.iter().all(|o| o.report.termination.converged())
        && populations.iter().all(|p| p.outcome.report.termination.converged());
    Ok(RunReport {
        mode: config.mode,
        exit_code: exit_code(converged),
        grid: GridInfo { dim: grid.dim(), points: grid.points(), h },
        time: TimeInfo { horizon: problem.time.horizon(), steps: problem.time.steps(), dt, written_slices: written },
        scheme: None,
        controls: Some(ControlInfo {
            j_max: problem.controls.j_max(),
            max_speed: problem.controls.j_max() as f64 * h / dt,
            saturated: outcomes[0].response.saturates(&problem.controls),
        }),
        primary,
        seeds,
        populations: summaries,
    })
}

/// Output directory: an explicit override wins; otherwise a relative
/// configured path is resolved against `FPLAY_OUTPUT_ROOT` when set.
pub fn output_directory(config: &RunConfig, explicit: Option<&Path>, root: Option<&Path>) -> PathBuf {
    if let Some(dir) = explicit {
        return dir.to_path_buf();
    }
    match root {
        Some(r) if config.output.directory.is_relative() => r.join(&config.output.directory),
        _ => config.output.directory.clone(),
    }
}
