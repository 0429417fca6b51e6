//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cd::{Batching, StepSchedule};
use crate::error::{invalid, Result};
use crate::expfam::{Exactness, Model, ParamDomain};
use crate::kernels::KernelKind;

/// Relative margin keeping `ψ*` away from the domain boundary.
pub const INTERIOR_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    GaussianMean { d: usize, rho: f64 },
    Boltzmann { d: usize },
    Ergm { k: usize },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        match *self {
            ModelSpec::GaussianMean { d, rho } => Model::gaussian_mean(d, rho),
            ModelSpec::Boltzmann { d } => Model::boltzmann(d),
            ModelSpec::Ergm { k } => Model::ergm(k),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    Gibbs,
    Metropolis,
    Exact,
    Identity,
}

impl KernelChoice {
    pub fn kind(self) -> KernelKind {
        match self {
            KernelChoice::Gibbs => KernelKind::Gibbs,
            KernelChoice::Metropolis => KernelKind::EdgeToggleMetropolis,
            KernelChoice::Exact => KernelKind::ExactSampler,
            KernelChoice::Identity => KernelKind::Identity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Online,
    FullBatch,
    WithReplacement,
    Reshuffle,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Online => "online",
            EstimatorKind::FullBatch => "full_batch",
            EstimatorKind::WithReplacement => "with_replacement",
            EstimatorKind::Reshuffle => "reshuffle",
        }
    }
}

/// Step constant `C`: a number, or a rule evaluated from the computed constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepConstant {
    Fixed(f64),
    /// `C = k / μ̃_m`.
    InverseMuTilde { times_inverse_mu_tilde: f64 },
    /// `C = f · μ̃_m / (4 L²)`, inside the constant-step offline condition for `f < 1`.
    OfflineFraction { offline_fraction: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainRule {
    /// `m_schedule(n, β, α)` for every sample size.
    Auto,
}

/// Chain length `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainLength {
    Fixed(usize),
    Rule(ChainRule),
    /// Smallest `m` with `μ̃_m ≥ f μ`.
    MuTildeFraction { mu_tilde_fraction: f64 },
}

fn default_epochs() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub c: StepConstant,
    pub beta: f64,
    pub m: ChainLength,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Fraction of stored iterates dropped before averaging.
    #[serde(default)]
    pub burn_in: f64,
    /// Starting point; the domain center when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<Vec<f64>>,
    /// Offline only: epochs after which the squared error is also recorded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<usize>,
}

impl EstimatorSpec {
    pub fn batching(&self) -> Result<Batching> {
        let size = || match self.batch_size {
            Some(b) if b > 0 => Ok(b),
            _ => invalid(format!("estimator {} needs a positive batch_size", self.kind.label())),
        };
        Ok(match self.kind {
            EstimatorKind::Online => Batching::Online,
            EstimatorKind::FullBatch => Batching::FullBatch,
            EstimatorKind::WithReplacement => Batching::WithReplacement { batch_size: size()? },
            EstimatorKind::Reshuffle => Batching::Reshuffle { batch_size: size()? },
        })
    }

    pub fn needs_constants(&self) -> bool {
        !matches!(self.c, StepConstant::Fixed(_)) || !matches!(self.m, ChainLength::Fixed(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaModeChoice {
    Exact,
    MonteCarlo,
}

fn default_outer() -> usize {
    20_000
}

fn default_inner() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSpec {
    /// Exact for enumerable models, Monte Carlo otherwise, when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<AlphaModeChoice>,
    #[serde(default = "default_outer")]
    pub outer: usize,
    #[serde(default = "default_inner")]
    pub inner: usize,
}

impl Default for AlphaSpec {
    fn default() -> Self {
        Self { mode: None, outer: default_outer(), inner: default_inner() }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory for `<stem>.csv`, `<stem>.json` and `<stem>.svg`. Nothing is
    /// written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_stem")]
    pub stem: String,
    #[serde(default = "default_true")]
    pub svg: bool,
}

fn default_stem() -> String {
    "report".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, stem: default_stem(), svg: true }
    }
}

fn default_resolution() -> usize {
    9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub psi_star: Vec<f64>,
    pub domain: DomainSpec,
    /// The family's default MCMC kernel when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelChoice>,
    pub estimator: EstimatorSpec,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub root_seed: u64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default)]
    pub alpha: AlphaSpec,
    /// Evaluate the online bound at every `n`.
    #[serde(default)]
    pub bounds: bool,
    #[serde(default)]
    pub outputs: OutputSpec,
    /// Size of the worker pool; the global rayon pool when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Validated, constructed pieces of a config.
#[derive(Clone, Debug)]
pub struct Setup {
    pub model: Model,
    pub domain: ParamDomain,
    pub psi_star: DVector<f64>,
    pub psi0: DVector<f64>,
    pub kernel: KernelKind,
    pub batching: Batching,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every invariant and builds the model, domain and kernel.
    pub fn setup(&self) -> Result<Setup> {
        let model = self.model.build()?;
        let p = model.dim();
        let dims = [
            ("psi_star", self.psi_star.len()),
            ("domain.center", self.domain.center.len()),
        ];
        for (name, len) in dims {
            if len != p {
                return invalid(format!("{name} has length {len}, model {} has dimension {p}", model.name()));
            }
        }
        let domain = ParamDomain::ball(&self.domain.center, self.domain.radius)?;
        let psi_star = DVector::from_column_slice(&self.psi_star);
        model.check_param(&psi_star)?;
        if !domain.contains_interior(&psi_star, INTERIOR_MARGIN * domain.radius()) {
            return invalid("psi_star must lie strictly inside the domain");
        }
        if model.exactness() == Exactness::None {
            return invalid(format!("{} has no exact sampler for data generation", model.name()));
        }

        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return invalid("n_grid must be a non-empty list of positive sample sizes");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("n_grid must be strictly increasing");
        }
        if self.replications == 0 {
            return invalid("replications must be positive");
        }
        if self.grid_resolution < 2 {
            return invalid("grid_resolution must be at least 2");
        }
        if self.workers == Some(0) {
            return invalid("workers must be positive");
        }
        if self.alpha.outer < 2 || self.alpha.inner < 2 {
            return invalid("alpha.outer and alpha.inner must both be at least 2");
        }

        let est = &self.estimator;
        let batching = est.batching()?;
        if let Some(b) = est.batch_size {
            if b > self.n_grid[0] {
                return invalid(format!("batch_size {b} exceeds the smallest n {}", self.n_grid[0]));
            }
        }
        match est.c {
            StepConstant::Fixed(c) => {
                StepSchedule::new(c, est.beta)?;
            }
            StepConstant::InverseMuTilde { times_inverse_mu_tilde: k } if !(k > 0.0 && k.is_finite()) => {
                return invalid("times_inverse_mu_tilde must be positive");
            }
            StepConstant::OfflineFraction { offline_fraction: f } if !(f > 0.0 && f.is_finite()) => {
                return invalid("offline_fraction must be positive");
            }
            _ => StepSchedule::new(0.0, est.beta).map(|_| ())?,
        }
        if let ChainLength::MuTildeFraction { mu_tilde_fraction: f } = est.m {
            if !(f > 0.0 && f < 1.0) {
                return invalid("mu_tilde_fraction must lie in (0, 1)");
            }
        }
        if !(0.0..1.0).contains(&est.burn_in) {
            return invalid(format!("burn_in must lie in [0, 1), got {}", est.burn_in));
        }
        if batching == Batching::Online {
            if !est.checkpoints.is_empty() {
                return invalid("checkpoints apply to offline estimators only");
            }
        } else {
            if est.epochs == 0 {
                return invalid("offline estimators need epochs ≥ 1");
            }
            if est.checkpoints.iter().any(|&t| t == 0 || t > est.epochs) {
                return invalid(format!("checkpoints must lie in [1, epochs = {}]", est.epochs));
            }
        }
        let psi0 = match &est.psi0 {
            Some(v) if v.len() != p => return invalid(format!("psi0 has length {}, expected {p}", v.len())),
            Some(v) => DVector::from_column_slice(v),
            None => domain.center().clone(),
        };
        if !domain.contains(&psi0) {
            return invalid("psi0 lies outside the domain");
        }

        let kernel = self.kernel.map_or_else(|| KernelKind::default_for(&model), KernelChoice::kind);
        crate::kernels::MarkovKernel::new(&model, kernel)?;
        Ok(Setup { model, domain, psi_star, psi0, kernel, batching })
    }
}
