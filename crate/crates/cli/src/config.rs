//! Experiment configuration: a TOML file with a mandatory schema version, an
//! experiment kind, and per-experiment sections.

use serde::{Deserialize, Serialize};

use bayesflow::catalog::{MetricSpec, ModelSpec, PotentialSpec};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub schema_version: u32,
    pub experiment: Experiment,
    /// Mandatory for stochastic experiments.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Lebesgue potential for lambda_g / metric_rank.
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    /// Named metrics for lambda_g and metric_rank.
    #[serde(default)]
    pub metrics: Vec<NamedMetric>,
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub spectral: Option<SpectralConfig>,
    #[serde(default)]
    pub graph: Option<GraphConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    LambdaG,
    FlowDecay,
    Sampler,
    Spectral,
    GraphSsl,
    MetricRank,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::LambdaG => "lambda_g",
            Experiment::FlowDecay => "flow_decay",
            Experiment::Sampler => "sampler",
            Experiment::Spectral => "spectral",
            Experiment::GraphSsl => "graph_ssl",
            Experiment::MetricRank => "metric_rank",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Experiment::Sampler | Experiment::GraphSsl)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedMetric {
    pub name: String,
    #[serde(flatten)]
    pub spec: MetricSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplingConfig {
    #[serde(default)]
    pub grid_per_axis: Option<usize>,
    #[serde(default)]
    pub random_count: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub xmin: f64,
    pub xmax: f64,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub ymin: Option<f64>,
    #[serde(default)]
    pub ymax: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowConfig {
    /// `kl_fp` or `chi2_pm`.
    pub kind: String,
    /// `kl`, `chi2`, `l2`, or `w2`.
    pub functional: String,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: f64,
    pub fit_window: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialConfig {
    /// `gaussian` or `bump`.
    pub kind: String,
    #[serde(default)]
    pub mean: Option<f64>,
    #[serde(default)]
    pub var: Option<f64>,
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default)]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// `langevin` or `chi2`.
    pub process: String,
    pub n_particles: usize,
    pub dt: f64,
    pub t_end: f64,
    /// `stationary`, `point`, or `initial` (the [initial] density).
    pub init: String,
    #[serde(default)]
    pub init_point: Option<Vec<f64>>,
    /// Histogram nodes per axis for diagnostics.
    #[serde(default)]
    pub bins: Option<usize>,
    /// Record a stats snapshot every this much time.
    #[serde(default)]
    pub record_every: Option<f64>,
    /// Keep every `thin`-th step of the particle-0 trace in the CSV.
    #[serde(default)]
    pub trace_thin: Option<usize>,
    /// Number of particles written to the trace CSV.
    #[serde(default)]
    pub trace_particles: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralConfig {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphConfig {
    /// `path`, `circle`, or `two_triangles` for builtin graphs.
    #[serde(default)]
    pub builtin: Option<String>,
    #[serde(default)]
    pub n: Option<usize>,
    /// Edge-list file: `i j w` per line, 0-indexed.
    #[serde(default)]
    pub edges_file: Option<String>,
    /// Point-cloud CSV (one comma-separated point per line) plus kernel.
    #[serde(default)]
    pub points_file: Option<String>,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub radius: Option<f64>,
    /// Label file: `j y_j` per line.
    #[serde(default)]
    pub labels_file: Option<String>,
    /// Inline labels.
    #[serde(default)]
    pub labels: Vec<LabelEntry>,
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// `probit`, `logistic`, or `gl`.
    pub likelihood: String,
    #[serde(default)]
    pub chain_steps: Option<usize>,
    #[serde(default)]
    pub chain_dt: Option<f64>,
    #[serde(default)]
    pub burn: Option<usize>,
    #[serde(default)]
    pub thin: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelEntry {
    pub node: usize,
    pub y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: String,
}

impl Config {
    pub fn from_str(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("TOML parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.experiment.is_stochastic() && self.seed.is_none() {
            return Err(CliError::Config(
                "seed: mandatory for stochastic experiments".into(),
            ));
        }
        let need = |ok: bool, field: &str| -> Result<(), CliError> {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "{field}: required for experiment `{}`",
                    self.experiment.name()
                )))
            }
        };
        match self.experiment {
            Experiment::LambdaG | Experiment::MetricRank => {
                need(self.potential.is_some(), "potential")?;
                need(!self.metrics.is_empty(), "metrics")?;
                need(self.domain.is_some(), "domain")?;
            }
            Experiment::FlowDecay => {
                need(self.model.is_some(), "model")?;
                need(self.grid.is_some(), "grid")?;
                need(self.flow.is_some(), "flow")?;
                need(self.initial.is_some(), "initial")?;
            }
            Experiment::Sampler => {
                need(self.model.is_some(), "model")?;
                need(self.sampler.is_some(), "sampler")?;
                need(self.grid.is_some(), "grid")?;
            }
            Experiment::Spectral => {
                need(self.model.is_some(), "model")?;
                need(self.grid.is_some(), "grid")?;
            }
            Experiment::GraphSsl => {
                need(self.graph.is_some(), "graph")?;
            }
        }
        if let Some(d) = &self.domain {
            if d.lo.len() != d.hi.len() || d.lo.is_empty() {
                return Err(CliError::Config(
                    "domain: lo and hi must be nonempty and of equal length".into(),
                ));
            }
        }
        if let Some(g) = &self.grid {
            if g.nx < 2 || !(g.xmax > g.xmin) {
                return Err(CliError::Config("grid: need nx >= 2 and xmax > xmin".into()));
            }
            if g.ny.is_some() && (g.ymin.is_none() || g.ymax.is_none()) {
                return Err(CliError::Config(
                    "grid: 2d grids need ny, ymin, ymax together".into(),
                ));
            }
        }
        if let Some(f) = &self.flow {
            if !matches!(f.kind.as_str(), "kl_fp" | "chi2_pm") {
                return Err(CliError::Config(format!(
                    "flow.kind: unknown `{}` (expected kl_fp or chi2_pm)",
                    f.kind
                )));
            }
            if !matches!(f.functional.as_str(), "kl" | "chi2" | "l2" | "w2") {
                return Err(CliError::Config(format!(
                    "flow.functional: unknown `{}`",
                    f.functional
                )));
            }
            if !(f.dt > 0.0) || !(f.t_end > 0.0) || !(f.record_every > 0.0) {
                return Err(CliError::Config(
                    "flow: dt, t_end, record_every must be positive".into(),
                ));
            }
        }
        if let Some(s) = &self.sampler {
            if !matches!(s.process.as_str(), "langevin" | "chi2") {
                return Err(CliError::Config(format!(
                    "sampler.process: unknown `{}`",
                    s.process
                )));
            }
            if !matches!(s.init.as_str(), "stationary" | "point" | "initial") {
                return Err(CliError::Config(format!(
                    "sampler.init: unknown `{}`",
                    s.init
                )));
            }
            if s.n_particles == 0 || !(s.dt > 0.0) || !(s.t_end > 0.0) {
                return Err(CliError::Config(
                    "sampler: n_particles, dt, t_end must be positive".into(),
                ));
            }
        }
        if let Some(g) = &self.graph {
            let sources = g.builtin.is_some() as u8
                + g.edges_file.is_some() as u8
                + g.points_file.is_some() as u8;
            if sources != 1 {
                return Err(CliError::Config(
                    "graph: exactly one of builtin, edges_file, points_file".into(),
                ));
            }
            if !matches!(g.likelihood.as_str(), "probit" | "logistic" | "gl") {
                return Err(CliError::Config(format!(
                    "graph.likelihood: unknown `{}`",
                    g.likelihood
                )));
            }
            if g.likelihood == "gl" && g.epsilon.is_none() {
                return Err(CliError::Config(
                    "graph.epsilon: required for the gl likelihood".into(),
                ));
            }
        }
        Ok(())
    }
}
