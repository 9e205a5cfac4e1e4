//! The grid experiments: deletion-distribution study and trade-off sweeps.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use unlearn_core::dataset::DatasetView;
use unlearn_core::method::{self, TrainedModel};
use unlearn_core::metrics;
use unlearn_core::rng;
use unlearn_core::sampler::{self, DeletionDistribution, DeletionSpec};
use unlearn_core::MethodConfig;

use crate::config::{ExperimentConfig, TauSpec};
use crate::data::Loaded;
use crate::error::CliResult;

/// Substream tags of a row seed.
pub const NOISE_TAG: u64 = 1;
pub const DELETION_TAG: u64 = 2;

/// σ grid of the effectiveness-certifiability sweep when none is configured.
pub const SIGMA_SWEEP: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    /// Certifiability against efficiency: τ varies at fixed σ.
    CertEff,
    /// Effectiveness against efficiency: τ varies at fixed σ.
    EffecEff,
    /// Effectiveness against certifiability: σ varies at the most efficient τ.
    EffecCert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub dataset: String,
    pub del_dist: DeletionDistribution,
    pub del_fraction: f64,
    pub m: usize,
    pub seed: u64,
    pub acc_test: f64,
    pub acc_del: f64,
    pub t_train_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub dataset: String,
    pub method: String,
    pub sigma: f64,
    pub tau: usize,
    pub del_dist: DeletionDistribution,
    pub del_fraction: f64,
    pub m: usize,
    pub seed: u64,
    pub acc_test_updated: f64,
    pub acc_test_retrain_opt: f64,
    pub acc_del_updated: f64,
    pub acc_del_retrain: f64,
    pub acc_err_pct: f64,
    pub acc_dis_pct: f64,
    pub t_unlearn_ms: f64,
    pub t_retrain_ms: f64,
    pub speedup: f64,
}

pub fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs `f` `repeats` times; returns the last result and the median time.
fn timed<T>(repeats: usize, mut f: impl FnMut() -> CliResult<T>) -> CliResult<(T, Duration)> {
    let mut times = Vec::with_capacity(repeats);
    let mut out = None;
    for _ in 0..repeats {
        let start = Instant::now();
        out = Some(f()?);
        times.push(start.elapsed());
    }
    let median = metrics::median_duration(&times).unwrap_or_default();
    Ok((out.expect("repeats is at least 1"), median))
}

fn deletion(
    cfg: &ExperimentConfig,
    data: &Loaded,
    dist: DeletionDistribution,
    fraction: f64,
    seed: u64,
) -> CliResult<Vec<usize>> {
    let spec = DeletionSpec {
        distribution: dist,
        fraction,
        target_class: cfg.deletion.target_class,
        seed: rng::derive_seed(seed, DELETION_TAG),
    };
    Ok(sampler::sample_deletions(&data.train, &DatasetView::full(data.train.len()), &spec)?)
}

/// Retrains from scratch after each deletion and records test and
/// deleted-set accuracy.
pub fn deletion_study(cfg: &ExperimentConfig, data: &Loaded) -> CliResult<Vec<StudyRow>> {
    cfg.validate()?;
    let sigma = cfg.method.sigma_grid(&[0.0])[0];
    let tau = cfg.method.tau.first().copied().unwrap_or(cfg.method.efficient_tau());
    let full = DatasetView::full(data.train.len());
    let mut rows = Vec::new();
    for &dist in &cfg.deletion.distributions {
        for &fraction in &cfg.deletion.fractions {
            for &seed in &cfg.seeds {
                let deleted = deletion(cfg, data, dist, fraction, seed)?;
                let after = full.delete_points(&deleted)?;
                let settings = cfg.train.settings(seed);
                let method = cfg.method.build(sigma, tau.resolve(deleted.len()), rng::derive_seed(seed, NOISE_TAG));
                let (model, t) =
                    timed(cfg.repeats, || Ok(method::train_model(&data.train, &after, &settings, &method)?))?;
                rows.push(StudyRow {
                    dataset: data.name.clone(),
                    del_dist: dist,
                    del_fraction: fraction,
                    m: deleted.len(),
                    seed,
                    acc_test: model.classifier.accuracy(&data.test)?.fraction(),
                    acc_del: model.classifier.accuracy_on(&data.train, &deleted)?.fraction(),
                    t_train_ms: ms(t),
                });
            }
        }
    }
    rows.sort_by(|a, b| {
        a.del_dist
            .as_str()
            .cmp(b.del_dist.as_str())
            .then(a.del_fraction.total_cmp(&b.del_fraction))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}

/// The σ and τ grids swept along `axis`.
pub fn grids(cfg: &ExperimentConfig, axis: Axis) -> (Vec<f64>, Vec<TauSpec>) {
    match axis {
        Axis::CertEff | Axis::EffecEff => (cfg.method.sigma_grid(&[0.0]), cfg.method.tau_grid()),
        Axis::EffecCert => {
            let tau = if cfg.method.tau.is_empty() { vec![cfg.method.efficient_tau()] } else { cfg.method.tau.clone() };
            (cfg.method.sigma_grid(&SIGMA_SWEEP), tau)
        }
    }
}

/// One row per (σ, τ, distribution, fraction, seed) with the updated model
/// scored against a retrain at the same σ and a noise-free retrain.
pub fn tradeoff(cfg: &ExperimentConfig, data: &Loaded, axis: Axis) -> CliResult<Vec<TradeoffRow>> {
    cfg.validate()?;
    let (sigmas, taus) = grids(cfg, axis);
    let full = DatasetView::full(data.train.len());
    let (train, test) = (&data.train, &data.test);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let settings = cfg.train.settings(seed);
        let noise_seed = rng::derive_seed(seed, NOISE_TAG);
        let build = |sigma: f64, tau: usize| cfg.method.build(sigma, tau, noise_seed);
        let initial: Vec<TrainedModel> = sigmas
            .iter()
            .map(|&s| method::train_model(train, &full, &settings, &build(s, 1)))
            .collect::<Result<_, _>>()?;
        for &dist in &cfg.deletion.distributions {
            for &fraction in &cfg.deletion.fractions {
                let deleted = deletion(cfg, data, dist, fraction, seed)?;
                let m = deleted.len();
                let after = full.delete_points(&deleted)?;
                let retrain = |method: &MethodConfig| -> CliResult<(TrainedModel, Duration)> {
                    timed(cfg.repeats, || Ok(method::train_model(train, &after, &settings, method)?))
                };
                let (opt, t_opt) = retrain(&build(0.0, 1))?;
                let acc_test_opt = opt.classifier.accuracy(test)?;
                for (&sigma, model) in sigmas.iter().zip(&initial) {
                    let (retrained, t_sigma) =
                        if sigma == 0.0 { (opt.clone(), t_opt) } else { retrain(&build(sigma, 1))? };
                    let t_retrain = if cfg.retrain_includes_noise { t_sigma } else { t_opt };
                    let acc_del_retrain = retrained.classifier.accuracy_on(train, &deleted)?;
                    for tau_spec in &taus {
                        let tau = tau_spec.resolve(m);
                        let method_cfg = build(sigma, tau);
                        let mut times = Vec::with_capacity(cfg.repeats);
                        let mut updated = None;
                        for _ in 0..cfg.repeats {
                            let out =
                                method::unlearn_model(model, train, &full, &deleted, settings.lambda, &method_cfg)?;
                            times.push(out.elapsed);
                            updated = Some(out.model);
                        }
                        let updated = updated.expect("repeats is at least 1");
                        let t_unlearn = metrics::median_duration(&times).unwrap_or_default();
                        let acc_test_updated = updated.classifier.accuracy(test)?;
                        let acc_del_updated = updated.classifier.accuracy_on(train, &deleted)?;
                        rows.push(TradeoffRow {
                            dataset: data.name.clone(),
                            method: cfg.method.name.to_string(),
                            sigma,
                            tau,
                            del_dist: dist,
                            del_fraction: fraction,
                            m,
                            seed,
                            acc_test_updated: acc_test_updated.fraction(),
                            acc_test_retrain_opt: acc_test_opt.fraction(),
                            acc_del_updated: acc_del_updated.fraction(),
                            acc_del_retrain: acc_del_retrain.fraction(),
                            acc_err_pct: metrics::acc_err(acc_test_opt.fraction(), acc_test_updated.fraction()),
                            acc_dis_pct: metrics::acc_dis(acc_del_retrain, acc_del_updated)?,
                            t_unlearn_ms: ms(t_unlearn),
                            t_retrain_ms: ms(t_retrain),
                            speedup: metrics::speedup(t_retrain, t_unlearn).unwrap_or(f64::INFINITY),
                        });
                    }
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        a.sigma
            .total_cmp(&b.sigma)
            .then(a.tau.cmp(&b.tau))
            .then(a.del_dist.as_str().cmp(b.del_dist.as_str()))
            .then(a.del_fraction.total_cmp(&b.del_fraction))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(rows)
}
