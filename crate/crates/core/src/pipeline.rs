//! The train → unlearn → employ-or-retrain lifecycle, auditing, and the
//! disparity estimator that drives the retrain decision.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetView, LabeledDataset};
use crate::error::{Error, Result};
use crate::method::{self, MethodConfig, MethodKind, TrainSettings, TrainedModel};
use crate::metrics;
use crate::objective::Accuracy;
use crate::rng;
use crate::sampler::{self, DeletionDistribution, DeletionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Largest estimated disparity, in percent, at which a model is employed.
    pub max_est_disparity: f64,
    /// Smallest test accuracy, as a fraction, at which a model is employed.
    pub min_acc_test: f64,
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_est_disparity >= 0.0) || !self.min_acc_test.is_finite() {
            return Err(Error::InvalidConfig("thresholds must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainEstimator {
    pub c: f64,
    pub theta: f64,
    /// Multiplier applied to `c` for a more conservative estimate.
    #[serde(default = "one")]
    pub safety: f64,
}

fn one() -> f64 {
    1.0
}

impl RetrainEstimator {
    pub fn new(c: f64, theta: f64) -> Self {
        Self { c, theta, safety: 1.0 }
    }
}

/// `safety · c · SAPE(acc_init, acc_updated)`.
pub fn estimate_disparity(est: &RetrainEstimator, acc_test_init: f64, acc_test_updated: f64) -> f64 {
    est.safety * est.c * metrics::sape(acc_test_init, acc_test_updated)
}

/// Accuracy errors measured at one deletion fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityPoint {
    pub fraction: f64,
    pub m: usize,
    /// SAPE between the initial and updated models' test accuracy.
    pub acc_err_init: f64,
    pub acc_dis: f64,
}

/// The configuration at its most efficient setting for `m` deletions:
/// one Newton step for Fisher and Influence; DeltaGrad is left as given.
pub fn most_efficient(method: &MethodConfig, m: usize) -> MethodConfig {
    match method.kind() {
        MethodKind::Fisher | MethodKind::Influence => method.with_tau(m),
        MethodKind::DeltaGrad => method.clone(),
    }
}

/// Trains once, then for each fraction deletes targeted-random points,
/// unlearns, retrains, and measures both errors.
pub fn disparity_sweep(
    ds: &LabeledDataset,
    test: &LabeledDataset,
    view: &DatasetView,
    settings: &TrainSettings,
    method: &MethodConfig,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<DisparityPoint>> {
    let initial = method::train_model(ds, view, settings, method)?;
    let acc_init = initial.classifier.accuracy(test)?.fraction();
    let mut points = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let spec =
            DeletionSpec { distribution: DeletionDistribution::TargetedRandom, fraction, target_class: None, seed };
        let deleted = sampler::sample_deletions(ds, view, &spec)?;
        let cfg = most_efficient(method, deleted.len());
        let updated = method::unlearn_model(&initial, ds, view, &deleted, settings.lambda, &cfg)?;
        let after = view.delete_points(&deleted)?;
        let retrained = method::train_model(ds, &after, settings, method)?;
        let acc_updated = updated.model.classifier.accuracy(test)?.fraction();
        let acc_dis = metrics::acc_dis(
            retrained.classifier.accuracy_on(ds, &deleted)?,
            updated.model.classifier.accuracy_on(ds, &deleted)?,
        )?;
        points.push(DisparityPoint {
            fraction,
            m: deleted.len(),
            acc_err_init: metrics::sape(acc_init, acc_updated),
            acc_dis,
        });
    }
    Ok(points)
}

/// Learns `c = AccDis / AccErr_init` at deletion fraction `theta`.
pub fn calibrate_c(
    ds: &LabeledDataset,
    test: &LabeledDataset,
    view: &DatasetView,
    settings: &TrainSettings,
    method: &MethodConfig,
    theta: f64,
    seed: u64,
) -> Result<RetrainEstimator> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidConfig(format!("theta must be in (0, 1), got {theta}")));
    }
    let point = disparity_sweep(ds, test, view, settings, method, &[theta], seed)?[0];
    if point.acc_err_init == 0.0 {
        return Err(Error::Calibration(format!(
            "test accuracy unchanged after deleting a fraction {theta}; use a larger theta"
        )));
    }
    Ok(RetrainEstimator::new(point.acc_dis / point.acc_err_init, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Employ,
    Retrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub settings: TrainSettings,
    pub method: MethodConfig,
    pub thresholds: Thresholds,
    /// Recompute `c` after every retrain.
    #[serde(default)]
    pub recalibrate: bool,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineState {
    pub view: DatasetView,
    pub employed: TrainedModel,
    pub config: PipelineConfig,
    pub acc_test_init: Accuracy,
    pub estimator: RetrainEstimator,
    /// Deletion requests handled so far.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub decision: Decision,
    pub acc_test_updated: Accuracy,
    pub est_disparity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pass: bool,
    pub acc_dis: f64,
    pub acc_del_employed: Accuracy,
    pub acc_del_retrained: Accuracy,
}

impl PipelineState {
    /// Trains the initial model on every point of `ds`.
    pub fn start(
        ds: &LabeledDataset,
        test: &LabeledDataset,
        config: PipelineConfig,
        estimator: RetrainEstimator,
    ) -> Result<Self> {
        config.thresholds.validate()?;
        let view = DatasetView::full(ds.len());
        let employed = method::train_model(ds, &view, &config.settings, &config.method)?;
        let acc_test_init = employed.classifier.accuracy(test)?;
        Ok(Self { view, employed, config, acc_test_init, estimator, steps: 0 })
    }

    /// Unlearns `ids` and decides whether to keep the result or retrain.
    pub fn step_deletion(
        &self,
        ds: &LabeledDataset,
        test: &LabeledDataset,
        ids: &[usize],
    ) -> Result<(Self, StepOutcome)> {
        let cfg = &self.config;
        let step_method = cfg.method.with_noise_seed(rng::derive_seed(cfg.method.noise_seed(), self.steps as u64 + 1));
        let updated = method::unlearn_model(&self.employed, ds, &self.view, ids, cfg.settings.lambda, &step_method)?;
        let view = self.view.delete_points(ids)?;
        let acc_test_updated = updated.model.classifier.accuracy(test)?;
        let est_disparity =
            estimate_disparity(&self.estimator, self.acc_test_init.fraction(), acc_test_updated.fraction());
        let employ = acc_test_updated.fraction() >= cfg.thresholds.min_acc_test
            && est_disparity <= cfg.thresholds.max_est_disparity;
        let outcome = StepOutcome {
            decision: if employ { Decision::Employ } else { Decision::Retrain },
            acc_test_updated,
            est_disparity,
        };
        let mut next = Self { view, employed: updated.model, steps: self.steps + 1, ..self.clone() };
        if !employ {
            next.employed = method::train_model(ds, &next.view, &cfg.settings, &cfg.method)?;
            next.acc_test_init = next.employed.classifier.accuracy(test)?;
            if cfg.recalibrate {
                let seed = rng::derive_seed(cfg.seed, next.steps as u64);
                next.estimator = RetrainEstimator {
                    safety: self.estimator.safety,
                    ..calibrate_c(ds, test, &next.view, &cfg.settings, &cfg.method, self.estimator.theta, seed)?
                };
            }
        }
        Ok((next, outcome))
    }

    /// Retrains from scratch on the remaining points and compares accuracy
    /// on every point deleted so far.
    pub fn audit(&self, ds: &LabeledDataset, threshold: f64) -> Result<AuditReport> {
        let deleted = self.view.deleted();
        if deleted.is_empty() {
            return Err(Error::EmptySubset);
        }
        let retrained = method::train_model(ds, &self.view, &self.config.settings, &self.config.method)?;
        let acc_del_employed = self.employed.classifier.accuracy_on(ds, deleted)?;
        let acc_del_retrained = retrained.classifier.accuracy_on(ds, deleted)?;
        let acc_dis = metrics::acc_dis(acc_del_retrained, acc_del_employed)?;
        Ok(AuditReport { pass: acc_dis <= threshold, acc_dis, acc_del_employed, acc_del_retrained })
    }
}

/// One line of the pipeline log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineEvent {
    pub event: String,
    /// Milliseconds since the run started.
    pub timestamp: f64,
    pub m_cumulative: usize,
    pub acc_test: f64,
    pub est_disparity: Option<f64>,
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_pass: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc_dis: Option<f64>,
}

/// Runs the lifecycle over `stream`, optionally auditing at the end.
pub fn run_pipeline(
    ds: &LabeledDataset,
    test: &LabeledDataset,
    config: PipelineConfig,
    estimator: RetrainEstimator,
    stream: &[Vec<usize>],
    audit_threshold: Option<f64>,
) -> Result<(PipelineState, Vec<PipelineEvent>)> {
    let clock = Instant::now();
    let stamp = || clock.elapsed().as_secs_f64() * 1e3;
    let mut state = PipelineState::start(ds, test, config, estimator)?;
    let mut events = vec![PipelineEvent {
        event: "train".into(),
        timestamp: stamp(),
        m_cumulative: 0,
        acc_test: state.acc_test_init.fraction(),
        est_disparity: None,
        decision: None,
        audit_pass: None,
        acc_dis: None,
    }];
    for ids in stream {
        let (next, outcome) = state.step_deletion(ds, test, ids)?;
        state = next;
        events.push(PipelineEvent {
            event: "unlearn".into(),
            timestamp: stamp(),
            m_cumulative: state.view.deleted().len(),
            acc_test: outcome.acc_test_updated.fraction(),
            est_disparity: Some(outcome.est_disparity),
            decision: Some(outcome.decision),
            audit_pass: None,
            acc_dis: None,
        });
        if outcome.decision == Decision::Retrain {
            events.push(PipelineEvent {
                event: "retrain".into(),
                timestamp: stamp(),
                m_cumulative: state.view.deleted().len(),
                acc_test: state.acc_test_init.fraction(),
                est_disparity: None,
                decision: None,
                audit_pass: None,
                acc_dis: None,
            });
        }
    }
    if let Some(threshold) = audit_threshold {
        let report = state.audit(ds, threshold)?;
        events.push(PipelineEvent {
            event: "audit".into(),
            timestamp: stamp(),
            m_cumulative: state.view.deleted().len(),
            acc_test: state.employed.classifier.accuracy(test)?.fraction(),
            est_disparity: None,
            decision: None,
            audit_pass: Some(report.pass),
            acc_dis: Some(report.acc_dis),
        });
    }
    Ok((state, events))
}
