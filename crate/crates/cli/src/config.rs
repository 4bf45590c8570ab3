//! Experiment configuration files (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// A coefficient given either as a constant or as `[[c, p], ...]` meaning
/// `sum c * x^p` in the schedule variable (`t` or `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Const(f64),
    Terms(Vec<[f64; 2]>),
}

impl Coef {
    pub fn terms(&self) -> Vec<(f64, f64)> {
        match self {
            Coef::Const(c) => vec![(*c, 0.0)],
            Coef::Terms(ts) => ts.iter().map(|t| (t[0], t[1])).collect(),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Coef::Const(c) => Some(*c),
            Coef::Terms(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub problem: Option<ProblemConfig>,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    pub schedule: Option<ScheduleConfig>,
    pub ode: Option<OdeConfig>,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub report: ReportConfig,
}

/// Problem block; which fields apply depends on `kind`
/// (`lasso`, `lowrank`, `quadratic`, `abs`).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: String,
    pub seed: Option<u64>,
    // lasso
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub sparsity: Option<usize>,
    pub noise: Option<f64>,
    // lowrank
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub rank: Option<usize>,
    // both regularized problems
    pub weight: Option<f64>,
    pub lambda_metric: Option<f64>,
    // quadratic: `diag` or a dense row-major `matrix`, and an optional linear term
    pub diag: Option<Vec<f64>>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<f64>>,
    // abs: f(x) = weight * |x|_1 in dimension `dim`
    pub dim: Option<usize>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: String,
    pub label: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<Coef>,
    pub s: Option<f64>,
    pub h: Option<f64>,
    pub b: Option<Coef>,
    pub theta: Option<f64>,
    pub correction: Option<String>,
    /// Energy parameter for the IPAHD-type Lyapunov column.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// `continuous` or `discrete`.
    pub kind: String,
    /// Named continuous family: `one`, `two`, `three` or `four`.
    pub case: Option<String>,
    pub alpha: f64,
    pub beta: Option<Coef>,
    pub b: Option<Coef>,
    pub r: Option<f64>,
    pub c: Option<f64>,
    pub b_exponent: Option<f64>,
    pub beta_exponent: Option<f64>,
    pub t0: Option<f64>,
    /// Continuous grid `[start, end]`.
    pub grid: Option<[f64; 2]>,
    pub grid_points: Option<usize>,
    /// `linear` (default) or `log`.
    pub grid_spacing: Option<String>,
    pub epsilon: Option<f64>,
    // discrete
    pub h: Option<f64>,
    pub lambda: Option<f64>,
    pub k_range: Option<[usize; 2]>,
    pub b_lower: Option<f64>,
    /// Conditions that decide the exit status; all reported ones by default.
    pub required: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    pub t_end: f64,
    pub tol: Option<f64>,
    pub x0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub fit_range: Option<[f64; 2]>,
    pub lambda: Option<f64>,
    pub grid_points: Option<usize>,
    pub fd_fallback: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub method: Option<String>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    pub s: Option<f64>,
    pub h: Option<f64>,
    pub b: Option<Coef>,
    pub theta: Option<f64>,
    pub correction: Option<String>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// Iteration range of the log-log rate fits.
    pub fit_range: Option<[f64; 2]>,
    /// Optional early stop once the gap drops below this value.
    pub gap_tol: Option<f64>,
    pub plots: Option<bool>,
}

/// A parsed config with command-line overrides applied, plus the digest of
/// the exact inputs.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub max_iter: usize,
    pub digest: String,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

pub fn load_config(path: &Path, seed: Option<u64>, max_iter: Option<usize>) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse_config(&text)?;
    let seed = seed
        .or(config.problem.as_ref().and_then(|p| p.seed))
        .or(config.seed)
        .unwrap_or(DEFAULT_SEED);
    let max_iter = max_iter.or(config.max_iter).unwrap_or(DEFAULT_MAX_ITER);
    if max_iter == 0 {
        return Err(CliError::Config("max_iter must be positive".into()));
    }
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    hasher.update(format!("\nseed={seed}\nmax_iter={max_iter}\n").as_bytes());
    Ok(LoadedConfig {
        config,
        seed,
        max_iter,
        digest: hex::encode(hasher.finalize()),
    })
}
