//! Experiment configuration read from a TOML document.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer};
use unlearn_core::deltagrad::DeltaGradConfig;
use unlearn_core::fisher::FisherConfig;
use unlearn_core::influence::InfluenceConfig;
use unlearn_core::sampler::DeletionDistribution;
use unlearn_core::sgd::SgdConfig;
use unlearn_core::synthetic::BlobSpec;
use unlearn_core::{MethodConfig, MethodKind, TrainSettings};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub method: MethodSection,
    #[serde(default)]
    pub deletion: DeletionSection,
    /// Each seed drives SGD shuffling, noise draws and deletion sampling.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Timed repetitions per measurement; the median is reported.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Count the method's noise injection in the retraining time.
    #[serde(default = "yes")]
    pub retrain_includes_noise: bool,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_repeats() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs(BlobsConfig),
    Libsvm {
        name: Option<String>,
        train: PathBuf,
        test: PathBuf,
        /// Source labels mapped to classes 0 and 1.
        binary_classes: Option<(String, String)>,
        #[serde(default = "yes")]
        normalize: bool,
    },
    /// Binary caches written by `ulbench ingest`.
    Cache {
        name: Option<String>,
        train: PathBuf,
        test: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobsConfig {
    pub name: Option<String>,
    pub n: usize,
    pub n_test: usize,
    pub dim: usize,
    pub separation: f64,
    pub class_ratio: f64,
    pub intercept: bool,
    pub seed: u64,
    pub normalize: bool,
}

impl Default for BlobsConfig {
    fn default() -> Self {
        let spec = BlobSpec::default();
        Self {
            name: None,
            n: spec.n,
            n_test: spec.n,
            dim: spec.dim,
            separation: spec.separation,
            class_ratio: spec.class_ratio,
            intercept: true,
            seed: spec.seed,
            normalize: true,
        }
    }
}

impl BlobsConfig {
    pub fn spec(&self) -> BlobSpec {
        BlobSpec {
            n: self.n,
            dim: self.dim,
            separation: self.separation,
            class_ratio: self.class_ratio,
            intercept: self.intercept,
            seed: self.seed,
        }
    }
}

impl DatasetConfig {
    /// Label written into every output row.
    pub fn name(&self) -> String {
        let stem = |p: &Path| {
            p.parent()
                .and_then(|d| d.file_name())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        };
        match self {
            DatasetConfig::Blobs(b) => b.name.clone().unwrap_or_else(|| "blobs".into()),
            DatasetConfig::Libsvm { name, train, .. } | DatasetConfig::Cache { name, train, .. } => {
                name.clone().unwrap_or_else(|| stem(train))
            }
        }
    }

    fn resolve(&mut self, base: &Path) {
        match self {
            DatasetConfig::Blobs(_) => {}
            DatasetConfig::Libsvm { train, test, .. } | DatasetConfig::Cache { train, test, .. } => {
                *train = base.join(&*train);
                *test = base.join(&*test);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub eta: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Full-gradient norm gate for Newton-based methods; `inf` disables it.
    pub grad_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        Self { lambda: 1e-4, eta: sgd.eta, epochs: sgd.epochs, batch_size: sgd.batch_size, grad_tol: 1e-3 }
    }
}

impl TrainConfig {
    pub fn settings(&self, seed: u64) -> TrainSettings {
        TrainSettings {
            lambda: self.lambda,
            sgd: SgdConfig {
                eta: self.eta,
                epochs: self.epochs,
                batch_size: self.batch_size,
                seed,
                record_trajectory: false,
                grad_tol: self.grad_tol.is_finite().then_some(self.grad_tol),
            },
        }
    }
}

/// An efficiency parameter value, either absolute or relative to the
/// number of deleted points (`"m"`, `"m/4"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauSpec {
    Count(usize),
    PerDeleted(usize),
}

impl TauSpec {
    pub fn resolve(self, m: usize) -> usize {
        match self {
            TauSpec::Count(k) => k,
            TauSpec::PerDeleted(div) => (m / div).max(1),
        }
    }
}

impl fmt::Display for TauSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauSpec::Count(k) => write!(f, "{k}"),
            TauSpec::PerDeleted(1) => f.write_str("m"),
            TauSpec::PerDeleted(d) => write!(f, "m/{d}"),
        }
    }
}

impl FromStr for TauSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "m" {
            return Ok(TauSpec::PerDeleted(1));
        }
        if let Some(div) = s.strip_prefix("m/") {
            return match div.parse() {
                Ok(d) if d > 0 => Ok(TauSpec::PerDeleted(d)),
                _ => Err(format!("bad divisor in tau {s:?}")),
            };
        }
        match s.parse() {
            Ok(k) if k > 0 => Ok(TauSpec::Count(k)),
            _ => Err(format!("tau must be a positive integer, \"m\" or \"m/k\", got {s:?}")),
        }
    }
}

impl<'de> Deserialize<'de> for TauSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) if k > 0 => Ok(TauSpec::Count(k as usize)),
            Raw::Int(k) => Err(serde::de::Error::custom(format!("tau must be positive, got {k}"))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodSection {
    pub name: MethodKind,
    /// Empty means the default grid of the chosen command.
    pub sigma: Vec<f64>,
    pub tau: Vec<TauSpec>,
    /// DeltaGrad burn-in `j₀`.
    pub burn_in: usize,
    /// DeltaGrad L-BFGS history length.
    pub history: usize,
}

impl Default for MethodSection {
    fn default() -> Self {
        Self { name: MethodKind::Fisher, sigma: Vec::new(), tau: Vec::new(), burn_in: 10, history: 2 }
    }
}

impl MethodSection {
    /// The method configuration for one grid cell.
    pub fn build(&self, sigma: f64, tau: usize, noise_seed: u64) -> MethodConfig {
        match self.name {
            MethodKind::Fisher => MethodConfig::Fisher(FisherConfig { sigma, minibatch: tau, noise_seed }),
            MethodKind::Influence => MethodConfig::Influence(InfluenceConfig { sigma, minibatch: tau, noise_seed }),
            MethodKind::DeltaGrad => MethodConfig::DeltaGrad(DeltaGradConfig {
                t0_period: tau,
                burn_in: self.burn_in,
                history: self.history,
                sigma,
                noise_seed,
            }),
        }
    }

    pub fn sigma_grid(&self, default: &[f64]) -> Vec<f64> {
        if self.sigma.is_empty() {
            default.to_vec()
        } else {
            self.sigma.clone()
        }
    }

    pub fn tau_grid(&self) -> Vec<TauSpec> {
        if !self.tau.is_empty() {
            return self.tau.clone();
        }
        match self.name {
            MethodKind::Fisher | MethodKind::Influence => [1, 2, 4, 8].map(TauSpec::PerDeleted).to_vec(),
            MethodKind::DeltaGrad => [2, 5, 50, 100].map(TauSpec::Count).to_vec(),
        }
    }

    /// The most efficient setting: one step for all deletions, or `T₀ = 100`.
    pub fn efficient_tau(&self) -> TauSpec {
        match self.name {
            MethodKind::Fisher | MethodKind::Influence => TauSpec::PerDeleted(1),
            MethodKind::DeltaGrad => TauSpec::Count(100),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeletionSection {
    pub distributions: Vec<DeletionDistribution>,
    pub fractions: Vec<f64>,
    pub target_class: Option<u32>,
}

impl Default for DeletionSection {
    fn default() -> Self {
        Self {
            distributions: DeletionDistribution::ALL.to_vec(),
            fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            target_class: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    /// Largest estimated disparity, in percent, at which a model is employed.
    pub max_est_disparity: f64,
    pub min_acc_test: f64,
    /// Fixed estimator constant; calibrated at `theta` when absent.
    pub c: Option<f64>,
    pub theta: f64,
    pub safety: f64,
    pub recalibrate: bool,
    /// Number of deletion requests in the generated stream.
    pub steps: usize,
    /// Share of the initial dataset deleted per request.
    pub step_fraction: f64,
    pub distribution: DeletionDistribution,
    /// Requests read from a file, one comma-separated batch per line.
    pub stream_file: Option<PathBuf>,
    pub audit_threshold: Option<f64>,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            max_est_disparity: 1.0,
            min_acc_test: 0.0,
            c: None,
            theta: 0.45,
            safety: 1.0,
            recalibrate: false,
            steps: 10,
            step_fraction: 0.01,
            distribution: DeletionDistribution::UniformRandom,
            stream_file: None,
            audit_threshold: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path`; relative dataset paths are taken from the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.dataset.resolve(base);
        if let Some(p) = cfg.pipeline.stream_file.as_mut() {
            *p = base.join(&*p);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be unique".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.deletion.distributions.is_empty() || self.deletion.fractions.is_empty() {
            return bad("deletion distributions and fractions must not be empty".into());
        }
        if let Some(f) = self.deletion.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("deletion fraction {f} outside (0, 1]"));
        }
        if let Some(s) = self.method.sigma.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return bad(format!("sigma {s} must be finite and non-negative"));
        }
        if self.method.name == MethodKind::DeltaGrad {
            if let Some(t) = self.method.tau.iter().find(|t| matches!(t, TauSpec::PerDeleted(_))) {
                return bad(format!("DeltaGrad takes a fixed period T0, not {t}"));
            }
        }
        if !(self.train.lambda >= 0.0) || !self.train.lambda.is_finite() {
            return bad(format!("lambda must be finite and non-negative, got {}", self.train.lambda));
        }
        if !(self.train.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.train.grad_tol));
        }
        self.train.settings(0).sgd.validate()?;
        if let DatasetConfig::Blobs(b) = &self.dataset {
            if b.n_test == 0 {
                return bad("blobs need n_test > 0".into());
            }
        }
        let p = &self.pipeline;
        if !(p.theta > 0.0 && p.theta < 1.0) || !(p.safety > 0.0) {
            return bad("pipeline theta must be in (0, 1) and safety positive".into());
        }
        if !(p.step_fraction > 0.0 && p.step_fraction <= 1.0) {
            return bad(format!("pipeline step_fraction {} outside (0, 1]", p.step_fraction));
        }
        Ok(())
    }
}
