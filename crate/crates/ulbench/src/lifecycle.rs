//! Pipeline simulation, one-shot audit, ingestion and plain training.

use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use unlearn_core::dataset::{self, DatasetView};
use unlearn_core::method::{self, TrainSettings};
use unlearn_core::objective::{self, BinaryTask, ObjectiveConfig};
use unlearn_core::pipeline::{
    self, AuditReport, PipelineConfig, PipelineEvent, PipelineState, RetrainEstimator, Thresholds,
};
use unlearn_core::rng;
use unlearn_core::sampler::{self, DeletionSpec};
use unlearn_core::MethodConfig;

use crate::config::ExperimentConfig;
use crate::data::Loaded;
use crate::error::{CliError, CliResult};
use crate::study::{ms, DELETION_TAG, NOISE_TAG};

const CALIBRATION_TAG: u64 = 3;

/// Settings and method of the first seed at the first σ, with τ resolved for `m`.
fn first_cell(cfg: &ExperimentConfig, m: usize) -> (TrainSettings, MethodConfig) {
    let seed = cfg.seeds[0];
    let sigma = cfg.method.sigma_grid(&[0.0])[0];
    let tau = cfg.method.tau.first().copied().unwrap_or(cfg.method.efficient_tau());
    (cfg.train.settings(seed), cfg.method.build(sigma, tau.resolve(m), rng::derive_seed(seed, NOISE_TAG)))
}

/// One deletion request per non-empty line, ids separated by commas or spaces.
pub fn read_stream(input: impl BufRead) -> CliResult<Vec<Vec<usize>>> {
    let mut stream = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let batch = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| CliError::Config(format!("stream line {}: bad id {t:?}", n + 1))))
            .collect::<CliResult<Vec<usize>>>()?;
        stream.push(batch);
    }
    Ok(stream)
}

/// The configured deletion requests; generated requests never repeat a point.
pub fn deletion_stream(cfg: &ExperimentConfig, data: &Loaded) -> CliResult<Vec<Vec<usize>>> {
    let p = &cfg.pipeline;
    if let Some(path) = &p.stream_file {
        let file =
            fs::File::open(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        return read_stream(std::io::BufReader::new(file));
    }
    let seed = rng::derive_seed(cfg.seeds[0], DELETION_TAG);
    let mut view = DatasetView::full(data.train.len());
    let mut stream = Vec::with_capacity(p.steps);
    for step in 0..p.steps {
        let spec = DeletionSpec {
            distribution: p.distribution,
            fraction: p.step_fraction,
            target_class: cfg.deletion.target_class,
            seed: rng::derive_seed(seed, step as u64),
        };
        let ids = sampler::sample_deletions(&data.train, &view, &spec)?;
        view = view.delete_points(&ids)?;
        stream.push(ids);
    }
    Ok(stream)
}

/// Estimator from the config, calibrated on the training data when `c` is unset.
pub fn estimator(
    cfg: &ExperimentConfig,
    data: &Loaded,
    settings: &TrainSettings,
    method: &MethodConfig,
) -> CliResult<RetrainEstimator> {
    let p = &cfg.pipeline;
    let base = match p.c {
        Some(c) => RetrainEstimator::new(c, p.theta),
        None => pipeline::calibrate_c(
            &data.train,
            &data.test,
            &DatasetView::full(data.train.len()),
            settings,
            method,
            p.theta,
            rng::derive_seed(cfg.seeds[0], CALIBRATION_TAG),
        )?,
    };
    Ok(RetrainEstimator { safety: p.safety, ..base })
}

/// Replays the deletion stream through the employ-or-retrain loop.
pub fn run_pipeline(cfg: &ExperimentConfig, data: &Loaded) -> CliResult<(RetrainEstimator, Vec<PipelineEvent>)> {
    cfg.validate()?;
    let stream = deletion_stream(cfg, data)?;
    let step_m = stream.first().map_or(1, Vec::len).max(1);
    let (settings, method) = first_cell(cfg, step_m);
    let est = estimator(cfg, data, &settings, &method)?;
    let p = &cfg.pipeline;
    let config = PipelineConfig {
        settings,
        method,
        thresholds: Thresholds { max_est_disparity: p.max_est_disparity, min_acc_test: p.min_acc_test },
        recalibrate: p.recalibrate,
        seed: cfg.seeds[0],
    };
    let (_, events) = pipeline::run_pipeline(&data.train, &data.test, config, est, &stream, p.audit_threshold)?;
    Ok((est, events))
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditOutput {
    pub dataset: String,
    pub method: String,
    pub sigma: f64,
    pub tau: usize,
    pub del_dist: String,
    pub del_fraction: f64,
    pub m: usize,
    pub threshold: f64,
    #[serde(flatten)]
    pub report: AuditReport,
}

/// Unlearns the first configured deletion and audits the result against a
/// model retrained from scratch.
pub fn audit(cfg: &ExperimentConfig, data: &Loaded) -> CliResult<AuditOutput> {
    cfg.validate()?;
    let dist = cfg.deletion.distributions[0];
    let fraction = cfg.deletion.fractions[0];
    let full = DatasetView::full(data.train.len());
    let spec = DeletionSpec {
        distribution: dist,
        fraction,
        target_class: cfg.deletion.target_class,
        seed: rng::derive_seed(cfg.seeds[0], DELETION_TAG),
    };
    let deleted = sampler::sample_deletions(&data.train, &full, &spec)?;
    let (settings, method) = first_cell(cfg, deleted.len());
    let initial = method::train_model(&data.train, &full, &settings, &method)?;
    let updated = method::unlearn_model(&initial, &data.train, &full, &deleted, settings.lambda, &method)?;
    let acc_test_init = updated.model.classifier.accuracy(&data.test)?;
    let threshold = cfg.pipeline.audit_threshold.unwrap_or(cfg.pipeline.max_est_disparity);
    let state = PipelineState {
        view: full.delete_points(&deleted)?,
        employed: updated.model,
        config: PipelineConfig {
            settings,
            method: method.clone(),
            thresholds: Thresholds { max_est_disparity: threshold, min_acc_test: 0.0 },
            recalibrate: false,
            seed: cfg.seeds[0],
        },
        acc_test_init,
        estimator: RetrainEstimator::new(0.0, cfg.pipeline.theta),
        steps: 1,
    };
    Ok(AuditOutput {
        dataset: data.name.clone(),
        method: method.kind().to_string(),
        sigma: method.sigma(),
        tau: method.tau(),
        del_dist: dist.to_string(),
        del_fraction: fraction,
        m: deleted.len(),
        threshold,
        report: state.audit(&data.train, threshold)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub dataset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub dim: usize,
    pub classes: Vec<String>,
    pub scale: f64,
}

/// Writes normalized `train.ulds` and `test.ulds` caches into `dir`.
pub fn ingest(data: &Loaded, dir: &Path) -> CliResult<IngestSummary> {
    fs::create_dir_all(dir)?;
    dataset::save_cache(&data.train, dir.join("train.ulds"))?;
    dataset::save_cache(&data.test, dir.join("test.ulds"))?;
    Ok(IngestSummary {
        dataset: data.name.clone(),
        n_train: data.train.len(),
        n_test: data.test.len(),
        dim: data.train.dim(),
        classes: data.train.class_names().to_vec(),
        scale: data.scale,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutput {
    pub dataset: String,
    pub method: String,
    pub sigma: f64,
    pub seed: u64,
    pub acc_train: f64,
    pub acc_test: f64,
    /// Largest full-data gradient norm of the ridge objective over OVR tasks.
    pub grad_norm: f64,
    pub t_train_ms: f64,
    pub weights: Vec<Vec<f64>>,
}

/// Trains on the full training set with the first seed and σ.
pub fn train(cfg: &ExperimentConfig, data: &Loaded) -> CliResult<TrainOutput> {
    cfg.validate()?;
    let (settings, method) = first_cell(cfg, 1);
    let full = DatasetView::full(data.train.len());
    let start = Instant::now();
    let model = method::train_model(&data.train, &full, &settings, &method)?;
    let t_train = start.elapsed();
    let obj = ObjectiveConfig::ridge(settings.lambda);
    let mut grad_norm: f64 = 0.0;
    for (task, w) in BinaryTask::for_dataset(&data.train).iter().zip(model.classifier.weights()) {
        grad_norm = grad_norm.max(objective::gradient(w, task, full.remaining(), &obj)?.norm());
    }
    Ok(TrainOutput {
        dataset: data.name.clone(),
        method: method.kind().to_string(),
        sigma: method.sigma(),
        seed: cfg.seeds[0],
        acc_train: model.classifier.accuracy(&data.train)?.fraction(),
        acc_test: model.classifier.accuracy(&data.test)?.fraction(),
        grad_norm,
        t_train_ms: ms(t_train),
        weights: model.classifier.weights().iter().map(|w| w.iter().copied().collect()).collect(),
    })
}
