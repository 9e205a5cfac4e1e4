//! Trajectory-replay unlearning with quasi-Newton gradient estimates.
//!
//! Training records, for every SGD step `t`, the iterate `w_t` and the batch
//! gradient `g_t` it was moved by. Unlearning replays the schedule from the
//! start. Exact steps recompute the gradient on what is left of the batch;
//! the others estimate the batch gradient at the new iterate as
//! `g_t + B (w'_t - w_t)` with an L-BFGS matrix `B`, then remove the deleted
//! points' contribution with the leave-m-out formula.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetView;
use crate::error::{Error, Result};
use crate::objective::{self, BinaryTask, ObjectiveConfig};
use crate::rng;
use crate::sgd::{self, BatchSchedule, SgdConfig, TrainingTrajectory};

/// Pairs with `Δwᵀ Δg` at or below this are discarded.
pub const CURVATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaGradConfig {
    /// Period `T₀` of exact steps after the burn-in.
    pub t0_period: usize,
    /// Number of leading steps `j₀` that are always exact.
    pub burn_in: usize,
    /// L-BFGS pairs kept (`h`).
    pub history: usize,
    pub sigma: f64,
    pub noise_seed: u64,
}

impl DeltaGradConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t0_period == 0 || self.history == 0 {
            return Err(Error::InvalidConfig("t0_period and history must be at least 1".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Whether replay step `t` (0-based) recomputes the gradient exactly.
    pub fn is_exact(&self, t: usize) -> bool {
        t <= self.burn_in || (t - self.burn_in).is_multiple_of(self.t0_period)
    }
}

/// The most recent `(Δw, Δg)` curvature pairs, oldest first.
#[derive(Debug, Clone)]
pub struct LbfgsHistory {
    capacity: usize,
    pairs: VecDeque<(DVector<f64>, DVector<f64>)>,
}

impl LbfgsHistory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, pairs: VecDeque::with_capacity(capacity) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Adds a pair if it satisfies the curvature condition; returns whether it was kept.
    pub fn push(&mut self, dw: DVector<f64>, dg: DVector<f64>) -> bool {
        if dw.dot(&dg) <= CURVATURE_EPS {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((dw, dg));
        true
    }

    /// `B v` for the BFGS matrix built from the pairs, starting from
    /// `B₀ = (yᵀy / sᵀy) I` of the newest pair.
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let (s_last, y_last) = self.pairs.back().ok_or(Error::EmptyHistory)?;
        let scale = y_last.norm_squared() / s_last.dot(y_last);
        // u_j = B_j s_j, where B_j uses pairs before j.
        let mut terms: Vec<(DVector<f64>, f64, &DVector<f64>, f64)> = Vec::with_capacity(self.pairs.len());
        let apply_prefix = |terms: &[(DVector<f64>, f64, &DVector<f64>, f64)], x: &DVector<f64>| {
            let mut out = x * scale;
            for (u, su, y, ys) in terms {
                out.axpy(-u.dot(x) / su, u, 1.0);
                out.axpy(y.dot(x) / ys, y, 1.0);
            }
            out
        };
        for (s, y) in &self.pairs {
            let u = apply_prefix(&terms, s);
            let su = s.dot(&u);
            terms.push((u, su, y, y.dot(s)));
        }
        Ok(apply_prefix(&terms, v))
    }
}

/// `g_t + B dw`; exactly `g_t` when `dw` is zero.
pub fn lbfgs_gradient_estimate(history: &LbfgsHistory, g_t: &DVector<f64>, dw: &DVector<f64>) -> Result<DVector<f64>> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if dw.len() != g_t.len() {
        return Err(Error::DimensionMismatch { expected: g_t.len(), found: dw.len() });
    }
    if dw.iter().all(|v| *v == 0.0) {
        return Ok(g_t.clone());
    }
    Ok(g_t + history.apply(dw)?)
}

/// A trained model together with what replay needs.
#[derive(Debug, Clone)]
pub struct DeltaGradModel {
    /// Final SGD iterate plus `σ b`.
    pub weights: DVector<f64>,
    pub trajectory: TrainingTrajectory,
    /// Batches as dataset ids.
    pub schedule: BatchSchedule,
}

/// Trains by SGD while recording the trajectory, then adds `σ b`.
pub fn dg_train(
    task: &BinaryTask,
    view: &DatasetView,
    lambda: f64,
    sgd_cfg: &SgdConfig,
    cfg: &DeltaGradConfig,
) -> Result<DeltaGradModel> {
    cfg.validate()?;
    let rows = view.remaining();
    let sgd_cfg = SgdConfig { record_trajectory: true, ..sgd_cfg.clone() };
    let positions = sgd::schedule_for(&sgd_cfg, rows.len())?;
    let obj = ObjectiveConfig::ridge(lambda);
    let (w, trajectory) = sgd::train(task, rows, &obj, &sgd_cfg, &positions, false)?;
    let trajectory = trajectory.expect("recording was requested");
    Ok(DeltaGradModel { weights: add_noise(w, cfg, 0), trajectory, schedule: positions.map_to(rows) })
}

fn add_noise(w: DVector<f64>, cfg: &DeltaGradConfig, counter: u64) -> DVector<f64> {
    if cfg.sigma == 0.0 {
        return w;
    }
    let b = rng::standard_normal(&mut rng::substream(cfg.noise_seed, counter), w.len());
    w + b * cfg.sigma
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub exact: usize,
    pub approximate: usize,
    /// Approximate steps computed exactly because no curvature pair was available.
    pub fallback: usize,
    /// Steps whose batch had no remaining points.
    pub skipped: usize,
    pub pairs_rejected: usize,
}

#[derive(Debug, Clone)]
pub struct Replay {
    /// Replayed final iterate plus a fresh `σ b`.
    pub weights: DVector<f64>,
    /// Trajectory with stored terms replaced by the replayed ones.
    pub trajectory: TrainingTrajectory,
    pub stats: ReplayStats,
}

/// Replays `trajectory` with `deleted` removed from `view`.
///
/// `schedule` holds the dataset ids of every batch, as returned by
/// [`dg_train`]; points absent from `view` are ignored.
pub fn dg_unlearn(
    trajectory: &TrainingTrajectory,
    schedule: &BatchSchedule,
    task: &BinaryTask,
    view: &DatasetView,
    deleted: &[usize],
    lambda: f64,
    cfg: &DeltaGradConfig,
) -> Result<Replay> {
    cfg.validate()?;
    if trajectory.len() != schedule.iterations() {
        return Err(Error::TrajectoryMismatch(format!(
            "{} records for {} scheduled steps",
            trajectory.len(),
            schedule.iterations()
        )));
    }
    if trajectory.dim != task.dim() {
        return Err(Error::DimensionMismatch { expected: task.dim(), found: trajectory.dim });
    }
    if let Some(bad) = schedule.batches.iter().flatten().find(|&&i| i >= view.n_init()) {
        return Err(Error::TrajectoryMismatch(format!("scheduled point {bad} not in dataset")));
    }
    if !deleted.is_empty() && view.delete_points(deleted)?.remaining().is_empty() {
        return Err(Error::EmptySubset);
    }
    let removed: BTreeSet<usize> = deleted.iter().copied().collect();
    let obj = ObjectiveConfig::ridge(lambda);
    let eta = trajectory.eta;
    let d = trajectory.dim;

    let mut stats = ReplayStats::default();
    let mut history = LbfgsHistory::new(cfg.history);
    let mut records = Vec::with_capacity(trajectory.len());
    let mut w = DVector::zeros(d);
    let mut keep = Vec::new();
    let mut drop = Vec::new();
    for (t, (batch, (w_t, g_t))) in schedule.batches.iter().zip(&trajectory.records).enumerate() {
        keep.clear();
        drop.clear();
        for &i in batch.iter().filter(|&&i| view.is_remaining(i)) {
            if removed.contains(&i) {
                drop.push(i);
            } else {
                keep.push(i);
            }
        }
        if keep.is_empty() {
            stats.skipped += 1;
            records.push((w.clone(), DVector::zeros(d)));
            continue;
        }
        let n_t = (keep.len() + drop.len()) as f64;
        let m_t = drop.len() as f64;
        let dw = &w - w_t;
        let exact = cfg.is_exact(t) || (history.is_empty() && dw.iter().any(|v| *v != 0.0));
        let g_keep = if exact {
            if cfg.is_exact(t) {
                stats.exact += 1;
            } else {
                stats.fallback += 1;
            }
            let g_keep = objective::gradient(&w, task, &keep, &obj)?;
            // Gradient on the whole pre-deletion batch, for the curvature pair.
            let g_full = if drop.is_empty() {
                g_keep.clone()
            } else {
                let g_drop = objective::gradient(&w, task, &drop, &obj)?;
                (&g_keep * (n_t - m_t) + g_drop * m_t) / n_t
            };
            if !history.push(dw, g_full - g_t) {
                stats.pairs_rejected += 1;
            }
            g_keep
        } else {
            stats.approximate += 1;
            let g_est = if history.is_empty() { g_t.clone() } else { lbfgs_gradient_estimate(&history, g_t, &dw)? };
            if drop.is_empty() {
                g_est
            } else {
                let g_drop = objective::gradient(&w, task, &drop, &obj)?;
                (g_est * n_t - g_drop * m_t) / (n_t - m_t)
            }
        };
        let next = &w - &g_keep * eta;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { iteration: t });
        }
        records.push((w, g_keep));
        w = next;
    }
    let trajectory = TrainingTrajectory { records, ..trajectory.clone() };
    Ok(Replay { weights: add_noise(w, cfg, 1), trajectory, stats })
}
