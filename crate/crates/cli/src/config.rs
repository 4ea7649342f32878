//! Experiment configuration: parsing, environment resolution and hashing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sthomog::corrector::{PreconditionerKind, TorusGrid};
use sthomog::environment::{presets, EnvironmentDocument, ValidationGrid};
use sthomog::stats::{ModulusTarget, Observable};
use sthomog::{EnvironmentSpec, Payoff, ScalingExponents};

use crate::error::CliError;

/// Where the medium comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentSource {
    Preset {
        preset: String,
        #[serde(default)]
        kappa: Option<f64>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    File {
        file: PathBuf,
    },
    Inline(Box<EnvironmentDocument>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSource,
    /// Grid on which structural bounds are checked; derived from the spec
    /// when absent.
    #[serde(default)]
    pub validation_grid: Option<ValidationGrid>,
    #[serde(default = "critical")]
    pub scaling: ScalingExponents,
    /// Required by every stochastic command.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cell1d: Option<Cell1dBlock>,
    #[serde(default)]
    pub corrector: Option<CorrectorBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub compare: Option<CompareBlock>,
    #[serde(default)]
    pub ergodic: Option<ErgodicBlock>,
    #[serde(default)]
    pub modulus: Option<ModulusBlock>,
}

fn critical() -> ScalingExponents {
    ScalingExponents::critical()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell1dBlock {
    #[serde(default = "default_n_quad")]
    pub n_quad: usize,
    /// `[n_t, n_x]` for the critical space-time cell problem.
    #[serde(default = "default_cell_grid")]
    pub grid: [usize; 2],
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_n_quad() -> usize {
    2048
}

fn default_cell_grid() -> [usize; 2] {
    [256, 256]
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectorSolver {
    /// Picked from the scaling regime.
    Regime,
    Continuation,
    Slice,
    TimeAveraged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorBlock {
    pub grid: TorusGrid,
    #[serde(default)]
    pub lambda_schedule: Option<Vec<f64>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_solver")]
    pub solver: CorrectorSolver,
    #[serde(default = "default_preconditioner")]
    pub preconditioner: PreconditionerKind,
    /// `δ` of the `−(δ/2) D_t²` stabilizer.
    #[serde(default)]
    pub stabilizer: f64,
}

fn default_max_iter() -> usize {
    20_000
}

fn default_solver() -> CorrectorSolver {
    CorrectorSolver::Regime
}

fn default_preconditioner() -> PreconditionerKind {
    PreconditionerKind::Auto
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub eps: f64,
    pub t: f64,
    /// Step as a fraction of `min(ε^α, ε^{2β})`, at most ¼.
    #[serde(default = "default_h_factor")]
    pub h_factor: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Number of full paths written to `paths.csv`.
    #[serde(default)]
    pub record_paths: usize,
    /// Keep every k-th step in recorded paths.
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

fn default_h_factor() -> f64 {
    0.25
}

/// Effective coefficients given directly instead of solved for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplicitCoefficients {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "C", default)]
    pub c: Option<Vec<f64>>,
    #[serde(rename = "U", default)]
    pub u: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    pub eps_list: Vec<f64>,
    pub payoff: Payoff,
    pub x: Vec<f64>,
    pub t: f64,
    pub n_paths: usize,
    #[serde(default = "default_h_factor")]
    pub h_factor: f64,
    /// Skips the corrector solve when present.
    #[serde(default)]
    pub coefficients: Option<ExplicitCoefficients>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErgodicBlock {
    pub eps: f64,
    pub t: f64,
    pub observable: Observable,
    pub n_paths: usize,
    #[serde(default = "default_h_factor")]
    pub h_factor: f64,
    #[serde(default)]
    pub random_phase: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusBlock {
    pub eps: f64,
    pub horizon: f64,
    pub target: ModulusTarget,
    pub deltas: Vec<f64>,
    pub n_paths: usize,
    #[serde(default = "default_h_factor")]
    pub h_factor: f64,
}

/// A parsed configuration with the hash of its effective content.
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<LoadedConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::Config("configuration must be a JSON object".into()))?;
        obj.insert("seed".into(), seed.into());
    }
    // serde_json maps are ordered by key, so this rendering is canonical.
    let canonical = serde_json::to_vec(&value).expect("JSON value serializes");
    let hash = hex::encode(Sha256::digest(&canonical));
    let config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    config.scaling.check().map_err(|e| CliError::Config(e.to_string()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, hash, base_dir })
}

impl LoadedConfig {
    pub fn spec(&self) -> Result<EnvironmentSpec, CliError> {
        match &self.config.environment {
            EnvironmentSource::Preset { preset, kappa, gamma } => match preset.as_str() {
                "constant" => Ok(presets::constant(kappa.unwrap_or(1.0))),
                "sine_medium" => Ok(presets::sine_medium()),
                "traveling_wave" => Ok(presets::traveling_wave()),
                "separable" => Ok(presets::separable()),
                "degenerate" => Ok(presets::degenerate()),
                "potential_medium" => Ok(presets::potential_medium()),
                "cellular_flow" => Ok(presets::cellular_flow(gamma.unwrap_or(0.5))),
                other => Err(CliError::Config(format!("unknown preset {other:?}"))),
            },
            EnvironmentSource::File { file } => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    self.base_dir.join(file)
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read environment {}: {e}", path.display())))?;
                Ok(EnvironmentSpec::from_json(&text)?)
            }
            EnvironmentSource::Inline(doc) => Ok(EnvironmentSpec::try_from((**doc).clone())?),
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.config
            .seed
            .ok_or_else(|| CliError::Config("this command needs an explicit \"seed\"".into()))
    }

    pub fn block<'a, T>(&self, block: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        block
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("configuration has no \"{name}\" block")))
    }
}
