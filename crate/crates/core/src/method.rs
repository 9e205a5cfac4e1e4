//! Common entry points over the three unlearning methods.
//!
//! A dataset with more than two classes is handled one-vs-rest: every
//! routine runs once per class and the weights form a [`Classifier`].

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetView, LabeledDataset};
use crate::deltagrad::{self, DeltaGradConfig, ReplayStats};
use crate::error::{Error, Result};
use crate::fisher::{self, FisherConfig};
use crate::influence::{self, InfluenceConfig};
use crate::objective::{BinaryTask, Classifier};
use crate::rng;
use crate::sgd::{BatchSchedule, SgdConfig, TrainingTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Fisher,
    Influence,
    #[serde(rename = "deltagrad")]
    DeltaGrad,
}

impl MethodKind {
    pub const ALL: [Self; 3] = [Self::Fisher, Self::Influence, Self::DeltaGrad];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fisher => "fisher",
            Self::Influence => "influence",
            Self::DeltaGrad => "deltagrad",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodConfig {
    Fisher(FisherConfig),
    Influence(InfluenceConfig),
    #[serde(rename = "deltagrad")]
    DeltaGrad(DeltaGradConfig),
}

impl MethodConfig {
    pub fn kind(&self) -> MethodKind {
        match self {
            MethodConfig::Fisher(_) => MethodKind::Fisher,
            MethodConfig::Influence(_) => MethodKind::Influence,
            MethodConfig::DeltaGrad(_) => MethodKind::DeltaGrad,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            MethodConfig::Fisher(c) => c.sigma,
            MethodConfig::Influence(c) => c.sigma,
            MethodConfig::DeltaGrad(c) => c.sigma,
        }
    }

    /// The efficiency parameter: m′ for Fisher and Influence, T₀ for DeltaGrad.
    pub fn tau(&self) -> usize {
        match self {
            MethodConfig::Fisher(c) => c.minibatch,
            MethodConfig::Influence(c) => c.minibatch,
            MethodConfig::DeltaGrad(c) => c.t0_period,
        }
    }

    pub fn noise_seed(&self) -> u64 {
        match self {
            MethodConfig::Fisher(c) => c.noise_seed,
            MethodConfig::Influence(c) => c.noise_seed,
            MethodConfig::DeltaGrad(c) => c.noise_seed,
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            MethodConfig::Fisher(c) => c.sigma = sigma,
            MethodConfig::Influence(c) => c.sigma = sigma,
            MethodConfig::DeltaGrad(c) => c.sigma = sigma,
        }
        out
    }

    pub fn with_tau(&self, tau: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            MethodConfig::Fisher(c) => c.minibatch = tau,
            MethodConfig::Influence(c) => c.minibatch = tau,
            MethodConfig::DeltaGrad(c) => c.t0_period = tau,
        }
        out
    }

    pub fn with_noise_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            MethodConfig::Fisher(c) => c.noise_seed = seed,
            MethodConfig::Influence(c) => c.noise_seed = seed,
            MethodConfig::DeltaGrad(c) => c.noise_seed = seed,
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::Fisher(c) => c.validate(),
            MethodConfig::Influence(c) => c.validate(),
            MethodConfig::DeltaGrad(c) => c.validate(),
        }
    }

    /// The configuration used for OVR task `index` of `count`: a single task
    /// keeps the seed, otherwise every task gets its own noise stream.
    fn for_task(&self, index: usize, count: usize) -> Self {
        if count == 1 {
            self.clone()
        } else {
            self.with_noise_seed(rng::derive_seed(self.noise_seed(), index as u64))
        }
    }
}

/// Replay inputs kept by DeltaGrad for each OVR task.
#[derive(Debug, Clone)]
pub struct ReplayState {
    pub schedule: BatchSchedule,
    pub trajectories: Vec<TrainingTrajectory>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub classifier: Classifier,
    pub replay: Option<ReplayState>,
}

/// Training shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub lambda: f64,
    pub sgd: SgdConfig,
}

/// Runs `method`'s training algorithm on the remaining points of `view`.
pub fn train_model(
    ds: &LabeledDataset,
    view: &DatasetView,
    settings: &TrainSettings,
    method: &MethodConfig,
) -> Result<TrainedModel> {
    method.validate()?;
    if view.remaining().is_empty() {
        return Err(Error::EmptySubset);
    }
    let tasks = BinaryTask::for_dataset(ds);
    let mut weights = Vec::with_capacity(tasks.len());
    let mut schedule = None;
    let mut trajectories = Vec::new();
    for (index, task) in tasks.iter().enumerate() {
        match method.for_task(index, tasks.len()) {
            MethodConfig::Fisher(c) => {
                weights.push(fisher::fisher_train(task, view, settings.lambda, &settings.sgd, &c)?)
            }
            MethodConfig::Influence(c) => {
                weights.push(influence::influence_train(task, view, settings.lambda, &settings.sgd, &c)?)
            }
            MethodConfig::DeltaGrad(c) => {
                let model = deltagrad::dg_train(task, view, settings.lambda, &settings.sgd, &c)?;
                weights.push(model.weights);
                trajectories.push(model.trajectory);
                schedule = Some(model.schedule);
            }
        }
    }
    Ok(TrainedModel {
        classifier: Classifier::from_tasks(weights),
        replay: schedule.map(|schedule| ReplayState { schedule, trajectories }),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest `‖∇L(w, D \ D_m)‖` over tasks, for Influence.
    pub residual: Option<f64>,
    /// Replay counts summed over tasks, for DeltaGrad.
    pub replay: Option<ReplayStats>,
}

#[derive(Debug, Clone)]
pub struct UnlearnResult {
    pub model: TrainedModel,
    /// Wall-clock time of the update, excluding diagnostics.
    pub elapsed: Duration,
    pub method: MethodKind,
    pub sigma: f64,
    pub tau: usize,
    pub diagnostics: Diagnostics,
}

impl UnlearnResult {
    pub fn weights(&self) -> &[DVector<f64>] {
        self.model.classifier.weights()
    }
}

/// Removes `deleted` from `model`, which was trained on `view`'s remaining points.
pub fn unlearn_model(
    model: &TrainedModel,
    ds: &LabeledDataset,
    view: &DatasetView,
    deleted: &[usize],
    lambda: f64,
    method: &MethodConfig,
) -> Result<UnlearnResult> {
    method.validate()?;
    let tasks = BinaryTask::for_dataset(ds);
    let current = model.classifier.weights();
    if current.len() != tasks.len() {
        return Err(Error::DimensionMismatch { expected: tasks.len(), found: current.len() });
    }
    let start = Instant::now();
    let mut weights = Vec::with_capacity(tasks.len());
    let mut replay = None;
    let mut stats = ReplayStats::default();
    for (index, task) in tasks.iter().enumerate() {
        match method.for_task(index, tasks.len()) {
            MethodConfig::Fisher(c) => {
                weights.push(fisher::fisher_unlearn(&current[index], task, view, deleted, lambda, &c)?)
            }
            MethodConfig::Influence(c) => {
                weights.push(influence::influence_unlearn(&current[index], task, view, deleted, lambda, &c)?)
            }
            MethodConfig::DeltaGrad(c) => {
                let state = model
                    .replay
                    .as_ref()
                    .ok_or_else(|| Error::TrajectoryMismatch("model has no recorded trajectory".into()))?;
                let traj = state
                    .trajectories
                    .get(index)
                    .ok_or_else(|| Error::TrajectoryMismatch(format!("no trajectory for task {index}")))?;
                let out = deltagrad::dg_unlearn(traj, &state.schedule, task, view, deleted, lambda, &c)?;
                weights.push(out.weights);
                stats.exact += out.stats.exact;
                stats.approximate += out.stats.approximate;
                stats.fallback += out.stats.fallback;
                stats.skipped += out.stats.skipped;
                stats.pairs_rejected += out.stats.pairs_rejected;
                replay
                    .get_or_insert_with(|| ReplayState { schedule: state.schedule.clone(), trajectories: Vec::new() })
                    .trajectories
                    .push(out.trajectory);
            }
        }
    }
    let elapsed = start.elapsed();

    let mut diagnostics = Diagnostics::default();
    match method.kind() {
        MethodKind::Influence => {
            let after = view.delete_points(deleted)?;
            let mut worst: f64 = 0.0;
            for (task, w) in tasks.iter().zip(&weights) {
                worst = worst.max(influence::residual(w, task, after.remaining(), lambda)?);
            }
            diagnostics.residual = Some(worst);
        }
        MethodKind::DeltaGrad => diagnostics.replay = Some(stats),
        MethodKind::Fisher => {}
    }
    Ok(UnlearnResult {
        model: TrainedModel { classifier: Classifier::from_tasks(weights), replay },
        elapsed,
        method: method.kind(),
        sigma: method.sigma(),
        tau: method.tau(),
        diagnostics,
    })
}
