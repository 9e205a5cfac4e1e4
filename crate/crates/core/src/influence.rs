//! Influence-function unlearning for a model trained on a noisy objective.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetView;
use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{self, BinaryTask, ObjectiveConfig};
use crate::rng;
use crate::sgd::{self, SgdConfig};

/// Row norms above `1 + NORM_SLACK` are rejected before training.
pub const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceConfig {
    pub sigma: f64,
    /// Deleted points removed per influence step (m′).
    pub minibatch: usize,
    pub noise_seed: u64,
}

impl InfluenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.minibatch == 0 {
            return Err(Error::InvalidConfig("minibatch must be at least 1".into()));
        }
        Ok(())
    }

    /// The objective with this configuration's noise draw.
    pub fn objective(&self, lambda: f64, dim: usize) -> ObjectiveConfig {
        let noise = (self.sigma > 0.0).then(|| rng::standard_normal(&mut rng::substream(self.noise_seed, 0), dim));
        ObjectiveConfig { lambda, sigma: self.sigma, noise }
    }
}

/// Trains by SGD on `L + σ bᵀw / |D|` with one draw of `b`.
pub fn influence_train(
    task: &BinaryTask,
    view: &DatasetView,
    lambda: f64,
    sgd_cfg: &SgdConfig,
    cfg: &InfluenceConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let rows = view.remaining();
    let ds = task.dataset();
    if let Some(&row) = rows.iter().find(|&&i| ds.row_norm(i) > 1.0 + NORM_SLACK) {
        return Err(Error::NotNormalized { row, norm: ds.row_norm(row) });
    }
    let obj = cfg.objective(lambda, task.dim());
    let schedule = sgd::schedule_for(sgd_cfg, rows.len())?;
    let (w, _) = sgd::train(task, rows, &obj, sgd_cfg, &schedule, true)?;
    sgd::check_converged(&w, task, rows, &obj, true, sgd_cfg.grad_tol)?;
    Ok(w)
}

/// Removes `deleted` in batches of `m′` with `w ← w + H⁻¹ (m′/|D′|) ∇L(w, batch)`.
///
/// `H` is the Hessian on the data left after the batch, `D′`. The factor
/// `m′/|D′|` converts the batch-mean gradient into the shift of the optimum
/// of the mean objective over `D′`.
pub fn influence_unlearn(
    w: &DVector<f64>,
    task: &BinaryTask,
    view: &DatasetView,
    deleted: &[usize],
    lambda: f64,
    cfg: &InfluenceConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if view.delete_points(deleted)?.remaining().is_empty() {
        return Err(Error::EmptySubset);
    }
    let obj = ObjectiveConfig::ridge(lambda);
    let mut w = w.clone();
    let mut current = view.clone();
    for batch in deleted.chunks(cfg.minibatch) {
        current = current.delete_points(batch)?;
        let rows = current.remaining();
        let h = objective::hessian(&w, task, rows, &obj)?;
        let delta = objective::gradient(&w, task, batch, &obj)? * (batch.len() as f64 / rows.len() as f64);
        w += linalg::cholesky_solve(&h, &delta)?;
    }
    Ok(w)
}

/// `‖∇L(w, D \ D_m)‖` of the plain objective after unlearning.
pub fn residual(w: &DVector<f64>, task: &BinaryTask, remaining: &[usize], lambda: f64) -> Result<f64> {
    Ok(objective::gradient(w, task, remaining, &ObjectiveConfig::ridge(lambda))?.norm())
}
