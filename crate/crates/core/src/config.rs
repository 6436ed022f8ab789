//! Experiment configuration: a single TOML file, schema-validated with
//! unknown keys rejected. The CLI subcommand selects the experiment; every
//! run is a deterministic function of (config, seed).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cell_solver::HeuristicSchedule;
use crate::error::{Error, Result};
use crate::families::{SurfaceFamily, VolumeFamily};
use crate::homogenize::{CellFormulaCfg, ScalingMode};
use crate::stochastic::{CoefficientLaw, EnsembleKind, EnsembleSpec};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Check,
    CellSolve,
    Homogenize,
    Stochastic,
    Gamma,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentKind::Check => "check",
            ExperimentKind::CellSolve => "cell_solve",
            ExperimentKind::Homogenize => "homogenize",
            ExperimentKind::Stochastic => "stochastic",
            ExperimentKind::Gamma => "gamma",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: Option<ExperimentKind>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_bc_width")]
    pub bc_width: f64,
}

fn default_dim() -> usize {
    1
}
fn default_h() -> f64 {
    0.25
}
fn default_bc_width() -> f64 {
    0.5
}

impl Default for DomainSection {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            h: default_h(),
            bc_width: default_bc_width(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_levels_cap")]
    pub levels_cap: usize,
    #[serde(default = "default_span_factor")]
    pub span_factor: f64,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_temperature")]
    pub proposal_temperature: f64,
}

fn default_levels_cap() -> usize {
    2001
}
fn default_span_factor() -> f64 {
    1.2
}
fn default_sweeps() -> usize {
    40
}
fn default_restarts() -> usize {
    3
}
fn default_temperature() -> f64 {
    0.5
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            levels_cap: default_levels_cap(),
            span_factor: default_span_factor(),
            sweeps: default_sweeps(),
            restarts: default_restarts(),
            proposal_temperature: default_temperature(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum ScalingChoice {
    DomainGrowth,
    Epsilon,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_r_schedule")]
    pub r: Vec<f64>,
    #[serde(default = "default_tail_window")]
    pub tail_window: usize,
    #[serde(default = "default_scaling")]
    pub scaling: ScalingChoice,
    #[serde(default = "default_recession_t")]
    pub recession_t: Vec<f64>,
    #[serde(default = "default_derivative_t")]
    pub derivative_t: Vec<f64>,
}

fn default_r_schedule() -> Vec<f64> {
    vec![4.0, 8.0, 16.0, 32.0, 64.0]
}
fn default_tail_window() -> usize {
    3
}
fn default_scaling() -> ScalingChoice {
    ScalingChoice::DomainGrowth
}
fn default_recession_t() -> Vec<f64> {
    vec![10.0, 100.0, 1000.0, 10000.0]
}
fn default_derivative_t() -> Vec<f64> {
    vec![0.1, 0.01, 0.001, 0.0001]
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            r: default_r_schedule(),
            tail_window: default_tail_window(),
            scaling: default_scaling(),
            recession_t: default_recession_t(),
            derivative_t: default_derivative_t(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulationSection {
    #[serde(default = "default_xi_grid")]
    pub xi: Vec<f64>,
    #[serde(default = "default_zeta_grid")]
    pub zeta: Vec<f64>,
}

fn default_xi_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}
fn default_zeta_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

impl Default for TabulationSection {
    fn default() -> Self {
        Self {
            xi: default_xi_grid(),
            zeta: default_zeta_grid(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum DatumChoice {
    Linear,
    Step,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum BcChoice {
    Full,
    Perpendicular,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub datum: DatumChoice,
    #[serde(default)]
    pub xi: Vec<f64>,
    #[serde(default)]
    pub zeta: Vec<f64>,
    pub nu: Vec<f64>,
    pub r: f64,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_bc")]
    pub bc: BcChoice,
    /// Domain center; defaults to the origin.
    #[serde(default)]
    pub center: Vec<f64>,
}

fn default_k() -> u32 {
    1
}
fn default_bc() -> BcChoice {
    BcChoice::Full
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum StochasticKindChoice {
    Checkerboard,
    IidCell,
    PoissonInclusion,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticSection {
    pub kind: StochasticKindChoice,
    #[serde(default = "default_radius")]
    pub radius: i64,
    pub volume_law: Vec<(f64, f64)>,
    pub surface_law: Vec<(f64, f64)>,
    #[serde(default = "default_n_omega")]
    pub n_omega: usize,
    #[serde(default = "default_process_xi")]
    pub xi: f64,
    #[serde(default = "default_process_r")]
    pub r: Vec<f64>,
}

fn default_radius() -> i64 {
    1
}
fn default_n_omega() -> usize {
    32
}
fn default_process_xi() -> f64 {
    1.0
}
fn default_process_r() -> Vec<f64> {
    vec![16.0, 32.0, 64.0, 128.0]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSection {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_target_location")]
    pub target_location: f64,
    #[serde(default = "default_target_amplitude")]
    pub target_amplitude: f64,
    #[serde(default = "default_interval")]
    pub interval: (f64, f64),
    #[serde(default = "default_cells_per_epsilon")]
    pub cells_per_epsilon: usize,
    #[serde(default = "default_gamma_levels")]
    pub levels: usize,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.25, 0.125, 0.0625]
}
fn default_target_location() -> f64 {
    0.5
}
fn default_target_amplitude() -> f64 {
    1.0
}
fn default_interval() -> (f64, f64) {
    (0.0, 1.0)
}
fn default_cells_per_epsilon() -> usize {
    4
}
fn default_gamma_levels() -> usize {
    257
}

impl Default for GammaSection {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            target_location: default_target_location(),
            target_amplitude: default_target_amplitude(),
            interval: default_interval(),
            cells_per_epsilon: default_cells_per_epsilon(),
            levels: default_gamma_levels(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default)]
    pub volume_magnitudes: Vec<f64>,
    #[serde(default)]
    pub surface_magnitudes: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub volume: Option<VolumeFamily>,
    #[serde(default)]
    pub surface: Option<SurfaceFamily>,
    #[serde(default)]
    pub domain: DomainSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub tabulation: TabulationSection,
    #[serde(default)]
    pub cell: Option<CellSection>,
    #[serde(default)]
    pub stochastic: Option<StochasticSection>,
    #[serde(default)]
    pub gamma: Option<GammaSection>,
    #[serde(default)]
    pub check: Option<CheckSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config {
            path: e
                .span()
                .map(|s| format!("byte range {s:?}"))
                .unwrap_or_else(|| "<schema>".into()),
            message: e.message().to_string(),
        })
    }

    /// Hex digest of the raw config text; recorded in every artifact.
    pub fn hash_of(text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn heuristic_schedule(&self, seed: u64) -> HeuristicSchedule {
        HeuristicSchedule {
            sweeps: self.solver.sweeps,
            restarts: self.solver.restarts,
            proposal_temperature: self.solver.proposal_temperature,
            seed,
        }
    }

    pub fn cell_formula_cfg(&self, seed: u64) -> CellFormulaCfg {
        CellFormulaCfg {
            h: self.domain.h,
            bc_width: self.domain.bc_width,
            tail_window: self.schedule.tail_window,
            span_factor: self.solver.span_factor,
            levels_cap: self.solver.levels_cap,
            scaling: match self.schedule.scaling {
                ScalingChoice::DomainGrowth => ScalingMode::DomainGrowth,
                ScalingChoice::Epsilon => ScalingMode::EpsilonScaling,
            },
            heuristic: self.heuristic_schedule(seed),
        }
    }

    pub fn require_volume(&self) -> Result<&VolumeFamily> {
        self.volume
            .as_ref()
            .ok_or_else(|| Error::config("volume", "section required for this experiment"))
    }

    pub fn require_surface(&self) -> Result<&SurfaceFamily> {
        self.surface
            .as_ref()
            .ok_or_else(|| Error::config("surface", "section required for this experiment"))
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        let st = self
            .stochastic
            .as_ref()
            .ok_or_else(|| Error::config("stochastic", "section required"))?;
        Ok(EnsembleSpec {
            kind: match st.kind {
                StochasticKindChoice::Checkerboard => EnsembleKind::Checkerboard,
                StochasticKindChoice::IidCell => EnsembleKind::IidCell,
                StochasticKindChoice::PoissonInclusion => EnsembleKind::PoissonInclusion {
                    radius: st.radius,
                },
            },
            dim: self.domain.dim,
            volume_law: CoefficientLaw::new(st.volume_law.clone())
                .map_err(|e| Error::config("stochastic.volume_law", e.to_string()))?,
            surface_law: CoefficientLaw::new(st.surface_law.clone())
                .map_err(|e| Error::config("stochastic.surface_law", e.to_string()))?,
        })
    }
}
