//! TOML run configuration and its translation into solver problems.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use fplay_core::coupling::ConvolutionCoupling;
use fplay_core::geometry::{DensityFlow, ProbabilityVector, TimeGrid, TorusGrid};
use fplay_core::hamiltonian::{DriftField, DriftModes, QuadraticHamiltonian};
use fplay_core::hjb::DEFAULT_CFL_SAFETY;
use fplay_core::nplayer::Placement;
use fplay_core::parabolic::{ParabolicProblem, SchemeOptions};
use fplay_core::report::{BeliefRule, PlayConfig};
use fplay_core::trajectory::FirstOrderProblem;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Parabolic,
    FirstOrder,
    Nplayer,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub hamiltonian: HamiltonianSection,
    pub coupling_f: CouplingSection,
    pub coupling_g: CouplingSection,
    #[serde(default)]
    pub initial: DensitySpec,
    #[serde(default)]
    pub play: PlaySection,
    pub nplayer: Option<NPlayerSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "one")]
    pub dim: usize,
    pub points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Number of time steps; omitted means the smallest CFL-admissible count
    /// (parabolic mode only).
    #[serde(rename = "K")]
    pub steps: Option<usize>,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// Viscosity override for the parabolic scheme.
    pub theta: Option<f64>,
    /// Largest displacement per step for the trajectory modes.
    pub j_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSection {
    /// One entry per axis; empty means `b = 0`.
    #[serde(default)]
    pub drift: Vec<DriftModes>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub cosine: Option<Vec<f64>>,
    pub samples: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: f64,
    /// Require a nonnegative kernel spectrum.
    #[serde(default)]
    pub monotone: bool,
}

/// Initial density: cosine modes `c[0] + sum_k c[k] sum_i cos(2 pi k x_i)`,
/// explicit samples, or uniform when both are absent.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub cosine: Option<Vec<f64>>,
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaySection {
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_tol_a")]
    pub tol_a: f64,
    #[serde(default = "default_m_floor")]
    pub m_floor: f64,
    #[serde(default)]
    pub belief: BeliefRule,
    #[serde(default = "default_sustain")]
    pub sustain: usize,
    /// Initial beliefs; the first one produces the primary outputs.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<BeliefSeed>,
}

impl Default for PlaySection {
    fn default() -> Self {
        Self {
            n_max: default_n_max(),
            tol_a: default_tol_a(),
            m_floor: default_m_floor(),
            belief: BeliefRule::default(),
            sustain: default_sustain(),
            seeds: default_seeds(),
        }
    }
}

/// Constant-in-time initial belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BeliefSeed {
    /// The initial density itself.
    M0,
    Uniform,
    /// Unit weight on one cell over a floor elsewhere, normalized.
    Spike {
        cell: Option<usize>,
        #[serde(default = "default_spike_floor")]
        floor: f64,
    },
}

impl BeliefSeed {
    pub fn label(&self) -> String {
        match self {
            BeliefSeed::M0 => "m0".into(),
            BeliefSeed::Uniform => "uniform".into(),
            BeliefSeed::Spike { cell, .. } => match cell {
                Some(c) => format!("spike@{c}"),
                None => "spike".into(),
            },
        }
    }

    pub fn density(&self, m0: &ProbabilityVector) -> Result<ProbabilityVector, CliError> {
        let grid = *m0.grid();
        Ok(match self {
            BeliefSeed::M0 => m0.clone(),
            BeliefSeed::Uniform => ProbabilityVector::uniform(grid),
            BeliefSeed::Spike { cell, floor } => {
                let cell = cell.unwrap_or_else(|| center_cell(&grid));
                if cell >= grid.cells() {
                    return Err(CliError::Config(format!("play.seeds: spike cell {cell} is off the grid")));
                }
                if !floor.is_finite() || *floor < 0.0 {
                    return Err(CliError::Config("play.seeds: spike floor must be >= 0".into()));
                }
                let mut w = vec![*floor; grid.cells()];
                w[cell] = 1.0;
                ProbabilityVector::normalized(grid, w)?
            }
        })
    }
}

fn center_cell(grid: &TorusGrid) -> usize {
    let mid = grid.points() / 2;
    grid.cell_at([mid, if grid.dim() > 1 { mid } else { 0 }])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    Quantile,
    Iid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NPlayerSection {
    /// Population sizes to run.
    pub players: Vec<usize>,
    #[serde(default = "default_placement")]
    pub placement: PlacementMode,
    #[serde(default)]
    pub seed: u64,
}

impl NPlayerSection {
    pub fn placement(&self) -> Placement {
        match self.placement {
            PlacementMode::Quantile => Placement::Quantile,
            PlacementMode::Iid => Placement::Iid { seed: self.seed },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "yes")]
    pub emit_plots: bool,
    /// Stages kept in the trajectory bank of the trajectory modes.
    #[serde(default)]
    pub bank_cap: usize,
    /// Upper bound on time slices written to `density_final.csv`.
    #[serde(default = "default_max_slices")]
    pub max_time_slices: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            emit_plots: true,
            bank_cap: 0,
            max_time_slices: default_max_slices(),
        }
    }
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_cfl() -> f64 {
    DEFAULT_CFL_SAFETY
}
fn default_n_max() -> usize {
    PlayConfig::default().n_max
}
fn default_tol_a() -> f64 {
    PlayConfig::default().tol_a
}
fn default_m_floor() -> f64 {
    PlayConfig::default().m_floor
}
fn default_sustain() -> usize {
    PlayConfig::default().sustain
}
fn default_seeds() -> Vec<BeliefSeed> {
    vec![BeliefSeed::M0]
}
fn default_spike_floor() -> f64 {
    1e-3
}
fn default_placement() -> PlacementMode {
    PlacementMode::Quantile
}
fn default_directory() -> PathBuf {
    PathBuf::from("fplay-output")
}
fn default_max_slices() -> usize {
    257
}

impl RunConfig {
    /// Parses TOML, reporting schema violations with their field path.
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let de = toml::Deserializer::parse(text).map_err(|e| CliError::Schema(e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().message().to_string();
            CliError::Schema(if path == "." { inner } else { format!("{path}: {inner}") })
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn grid(&self) -> Result<TorusGrid, CliError> {
        Ok(TorusGrid::new(self.grid.dim, self.grid.points)?)
    }

    pub fn play_config(&self) -> PlayConfig {
        PlayConfig {
            n_max: self.play.n_max,
            tol_a: self.play.tol_a,
            m_floor: self.play.m_floor,
            belief: self.play.belief,
            sustain: self.play.sustain,
        }
    }

    pub fn m0(&self, grid: TorusGrid) -> Result<ProbabilityVector, CliError> {
        density_from(&self.initial, grid, "initial")
    }

    pub fn hamiltonian(&self, grid: TorusGrid) -> Result<QuadraticHamiltonian, CliError> {
        let drift = if self.hamiltonian.drift.is_empty() {
            DriftField::zero(grid)
        } else {
            DriftField::from_modes(grid, &self.hamiltonian.drift)?
        };
        Ok(QuadraticHamiltonian::new(drift))
    }

    pub fn couplings(&self, grid: TorusGrid) -> Result<(ConvolutionCoupling, ConvolutionCoupling), CliError> {
        Ok((coupling_from(&self.coupling_f, grid, "coupling_f")?, coupling_from(&self.coupling_g, grid, "coupling_g")?))
    }

    pub fn parabolic_problem(&self) -> Result<ParabolicProblem, CliError> {
        let grid = self.grid()?;
        let (f, g) = self.couplings(grid)?;
        let options = SchemeOptions { theta: self.time.theta, cfl_safety: self.time.cfl_safety, steps: self.time.steps };
        Ok(ParabolicProblem::new(
            self.m0(grid)?,
            self.hamiltonian(grid)?,
            f,
            g,
            self.time.horizon,
            options,
            self.play_config(),
        )?)
    }

    pub fn first_order_problem(&self) -> Result<FirstOrderProblem, CliError> {
        let grid = self.grid()?;
        let (f, g) = self.couplings(grid)?;
        let steps = self
            .time
            .steps
            .ok_or_else(|| CliError::Config("time.K is required for the trajectory modes".into()))?;
        let time = TimeGrid::new(self.time.horizon, steps)?;
        let problem = FirstOrderProblem::new(
            self.m0(grid)?,
            self.hamiltonian(grid)?,
            f,
            g,
            time,
            self.time.j_max,
            self.play_config(),
        )?;
        Ok(problem.with_bank(self.output.bank_cap))
    }

    /// Initial belief flows, one per configured seed.
    pub fn initial_beliefs(&self, m0: &ProbabilityVector, time: TimeGrid) -> Result<Vec<DensityFlow>, CliError> {
        if self.play.seeds.is_empty() {
            return Err(CliError::Config("play.seeds must name at least one initial belief".into()));
        }
        self.play
            .seeds
            .iter()
            .map(|s| Ok(DensityFlow::constant(&s.density(m0)?, time)))
            .collect()
    }
}

fn density_from(spec: &DensitySpec, grid: TorusGrid, section: &str) -> Result<ProbabilityVector, CliError> {
    match (&spec.cosine, &spec.samples) {
        (Some(_), Some(_)) => Err(CliError::Config(format!("{section}: give either cosine or samples, not both"))),
        (Some(c), None) => {
            if c.is_empty() {
                return Err(CliError::Config(format!("{section}.cosine: needs at least one coefficient")));
            }
            let m = ProbabilityVector::from_fn(grid, |x| {
                let modes: f64 = c
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, a)| a * x.iter().map(|xi| (TAU * k as f64 * xi).cos()).sum::<f64>())
                    .sum();
                c[0] + modes
            })
            .map_err(|e| CliError::Config(format!("{section}.cosine: {e}")))?;
            Ok(m)
        }
        (None, Some(s)) => ProbabilityVector::normalized(grid, s.clone())
            .map_err(|e| CliError::Config(format!("{section}.samples: {e}"))),
        (None, None) => Ok(ProbabilityVector::uniform(grid)),
    }
}

fn coupling_from(spec: &CouplingSection, grid: TorusGrid, section: &str) -> Result<ConvolutionCoupling, CliError> {
    let coupling = match (&spec.cosine, &spec.samples) {
        (Some(c), None) => ConvolutionCoupling::from_cosine(grid, c, spec.offset),
        (None, Some(s)) => ConvolutionCoupling::from_samples(grid, s.clone(), spec.offset),
        (None, None) => Ok(ConvolutionCoupling::constant(grid, spec.offset)),
        (Some(_), Some(_)) => {
            return Err(CliError::Config(format!("{section}: give either cosine or samples, not both")))
        }
    }
    .map_err(|e| CliError::Config(format!("{section}: {e}")))?;
    if spec.monotone && !coupling.is_certified_monotone() {
        return Err(CliError::Config(format!(
            "{section}: flagged monotone but the kernel has a negative Fourier coefficient"
        )));
    }
    Ok(coupling)
}
