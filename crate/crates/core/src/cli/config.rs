//! Run configuration: one TOML document per run, unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GenData,
    SolveNl,
    SolveNtl,
    KPath,
    GammaPath,
    Thresholds,
    RecoveryCheck,
    Metrics,
    Piecewise,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::GenData => "gen-data",
            Task::SolveNl => "solve-nl",
            Task::SolveNtl => "solve-ntl",
            Task::KPath => "k-path",
            Task::GammaPath => "gamma-path",
            Task::Thresholds => "thresholds",
            Task::RecoveryCheck => "recovery-check",
            Task::Metrics => "metrics",
            Task::Piecewise => "piecewise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub loss: LossConfig,
    pub graph: GraphConfig,
    pub solver: SolverSection,
    pub path: PathSection,
    pub init: InitConfig,
    pub thresholds: ThresholdSection,
    pub metrics: MetricsSection,
    pub piecewise: PiecewiseSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            loss: LossConfig::default(),
            graph: GraphConfig::default(),
            solver: SolverSection::default(),
            path: PathSection::default(),
            init: InitConfig::default(),
            thresholds: ThresholdSection::default(),
            metrics: MetricsSection::default(),
            piecewise: PiecewiseSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    HalfMoons,
    TwoLine,
    Signal,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub kind: DataKind,
    pub n: usize,
    pub noise_sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub has_labels: bool,
    pub slopes: [f64; 2],
    pub intercepts: [f64; 2],
    pub x_range: [f64; 2],
    /// `[[length, value], ...]` segments for the signal generator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<(usize, f64)>>,
    /// Draw this many rows without replacement after loading.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            kind: DataKind::HalfMoons,
            n: 100,
            noise_sd: 0.1,
            file: None,
            has_labels: false,
            slopes: [1.0, -1.0],
            intercepts: [0.0, 0.0],
            x_range: [-1.0, 1.0],
            levels: None,
            resample: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `½‖x_i - a_i‖²` over the data rows.
    SquaredDistance,
    /// Ridge regression on the columns `(a, b)`.
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { kind: LossKind::SquaredDistance, eps: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Complete,
    Knn,
    Path,
    EdgeList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weights {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub kind: GraphKind,
    /// Weights for complete and path graphs; kNN graphs are always Gaussian.
    pub weights: Weights,
    pub k: usize,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { kind: GraphKind::Complete, weights: Weights::Uniform, k: 20, alpha: 0.5, file: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaRule {
    /// `3 n max_i ‖a_i‖ · 1.001` (clustering losses).
    ThreeNC,
    /// `1.001` times the exact-penalty threshold, with the quadratic bound on `C` for
    /// quadratic losses and the strongly convex bound otherwise.
    ExactPenalty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum XUpdateChoice {
    Auto,
    Exact,
    Linearized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub multiplier: f64,
    pub period: usize,
    /// Defaults to `2 / (0.99 σ)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { multiplier: 10.0, period: 100, cap: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_rule: Option<GammaRule>,
    pub k: usize,
    /// Defaults to 1 for Network Lasso and 10⁴ for the trimmed lasso.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iters: usize,
    pub x_update: XUpdateChoice,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_schedule: Option<ScheduleConfig>,
    pub stationarity: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            gamma: None,
            gamma_rule: None,
            k: 0,
            rho: None,
            eps_abs: 1e-5,
            eps_rel: 1e-5,
            max_iters: 1000,
            x_update: XUpdateChoice::Auto,
            lipschitz: None,
            rho_schedule: None,
            stationarity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSection {
    /// Explicit K values; otherwise `k_start, k_start - k_step, ..., k_end`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_values: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_start: Option<usize>,
    pub k_step: usize,
    pub k_end: usize,
    /// Explicit γ values; otherwise `gamma_start · gamma_ratio^t` for `gamma_count` steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    pub gamma_start: f64,
    pub gamma_ratio: f64,
    pub gamma_count: usize,
    pub warm_start: bool,
    pub stop_on_merge: bool,
    pub merge_tol: f64,
}

impl Default for PathSection {
    fn default() -> Self {
        Self {
            k_values: None,
            k_start: None,
            k_step: 1,
            k_end: 0,
            gammas: None,
            gamma_start: 1e-3,
            gamma_ratio: 1.2,
            gamma_count: 50,
            warm_start: true,
            stop_on_merge: true,
            merge_tol: crate::path::MERGE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    PerNodeMinimizer,
    FromFile,
    NlMidpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub policy: InitPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { policy: InitPolicy::PerNodeMinimizer, file: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    /// Bound `C` on the solution norm; computed from the losses when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    /// Aggregate strong convexity moduli per cluster, for losses without a closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_k: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// A `partition.json` or `path.json` produced by another command.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PiecewiseSection {
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub rho: f64,
    pub rho_schedule: bool,
    pub ntl_max_iters: usize,
    pub nl_gamma_start: f64,
    pub nl_gamma_ratio: f64,
    pub nl_gamma_count: usize,
    pub nl_rho: f64,
    pub nl_max_iters: usize,
    pub nl_alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub merge_tol: f64,
}

impl Default for PiecewiseSection {
    fn default() -> Self {
        let s = super::piecewise::PiecewiseSettings::default();
        Self {
            k: s.k,
            gamma: s.gamma,
            rho: s.rho,
            rho_schedule: s.rho_schedule,
            ntl_max_iters: s.ntl_max_iters,
            nl_gamma_start: 1e-3,
            nl_gamma_ratio: 1.2,
            nl_gamma_count: 100,
            nl_rho: s.nl_rho,
            nl_max_iters: s.nl_max_iters,
            nl_alpha: s.nl_alpha,
            eps_abs: s.eps_abs,
            eps_rel: s.eps_rel,
            merge_tol: s.merge_tol,
        }
    }
}

impl PiecewiseSection {
    pub fn settings(&self) -> super::piecewise::PiecewiseSettings {
        super::piecewise::PiecewiseSettings {
            k: self.k,
            gamma: self.gamma,
            rho: self.rho,
            rho_schedule: self.rho_schedule,
            ntl_max_iters: self.ntl_max_iters,
            nl_gammas: super::piecewise::geometric(self.nl_gamma_start, self.nl_gamma_ratio, self.nl_gamma_count),
            nl_rho: self.nl_rho,
            nl_max_iters: self.nl_max_iters,
            nl_alpha: self.nl_alpha,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            merge_tol: self.merge_tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[solver]\ngama = 1.0").is_err());
        let c = RunConfig::from_toml("task = \"k-path\"\n[path]\nk_start = 4500\nk_step = 50").unwrap();
        assert_eq!(c.task, Some(Task::KPath));
        assert_eq!(c.path.k_start, Some(4500));
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.task = Some(Task::Piecewise);
        c.data.levels = Some(vec![(3, 1.0), (4, -0.5)]);
        c.solver.rho_schedule = Some(ScheduleConfig::default());
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }
}
