//! Newton-correction unlearning with Fisher-shaped noise.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetView;
use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{self, BinaryTask, ObjectiveConfig};
use crate::rng;
use crate::sgd::{self, SgdConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherConfig {
    pub sigma: f64,
    /// Deleted points handled per Newton step (m′).
    pub minibatch: usize,
    pub noise_seed: u64,
}

impl FisherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.minibatch == 0 {
            return Err(Error::InvalidConfig("minibatch must be at least 1".into()));
        }
        Ok(())
    }
}

/// `σ F^{-1/4} b` for a fresh draw from substream `counter`.
fn fisher_noise(f: &nalgebra::DMatrix<f64>, lambda: f64, sigma: f64, seed: u64, counter: u64) -> Result<DVector<f64>> {
    let root = linalg::inverse_fourth_root(f, lambda)?;
    let b = rng::standard_normal(&mut rng::substream(seed, counter), f.nrows());
    Ok(root * b * sigma)
}

/// Trains by SGD, then adds `σ F^{-1/4} b` with `F` the Hessian at the result.
pub fn fisher_train(
    task: &BinaryTask,
    view: &DatasetView,
    lambda: f64,
    sgd_cfg: &SgdConfig,
    cfg: &FisherConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let rows = view.remaining();
    let obj = ObjectiveConfig::ridge(lambda);
    let schedule = sgd::schedule_for(sgd_cfg, rows.len())?;
    let (w_opt, _) = sgd::train(task, rows, &obj, sgd_cfg, &schedule, false)?;
    sgd::check_converged(&w_opt, task, rows, &obj, false, sgd_cfg.grad_tol)?;
    if cfg.sigma == 0.0 {
        return Ok(w_opt);
    }
    let f = objective::hessian(&w_opt, task, rows, &obj)?;
    Ok(w_opt + fisher_noise(&f, lambda, cfg.sigma, cfg.noise_seed, 0)?)
}

/// Removes `deleted` from the model in `⌈m/m′⌉` sequential Newton steps.
///
/// Batches follow the order of `deleted`. After each step a fresh noise
/// draw is added when `σ > 0`.
pub fn fisher_unlearn(
    w: &DVector<f64>,
    task: &BinaryTask,
    view: &DatasetView,
    deleted: &[usize],
    lambda: f64,
    cfg: &FisherConfig,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    if view.delete_points(deleted)?.remaining().is_empty() {
        return Err(Error::EmptySubset);
    }
    let obj = ObjectiveConfig::ridge(lambda);
    let mut w = w.clone();
    let mut current = view.clone();
    for (i, batch) in deleted.chunks(cfg.minibatch).enumerate() {
        current = current.delete_points(batch)?;
        let rows = current.remaining();
        let delta = objective::gradient(&w, task, rows, &obj)?;
        let f = objective::hessian(&w, task, rows, &obj)?;
        w -= linalg::cholesky_solve(&f, &delta)?;
        if cfg.sigma > 0.0 {
            w += fisher_noise(&f, lambda, cfg.sigma, cfg.noise_seed, i as u64 + 1)?;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledDataset;

    fn zero_rows() -> LabeledDataset {
        LabeledDataset::new(vec![0.0; 12], vec![0, 1, 0, 1], 3, vec!["0".into(), "1".into()]).unwrap()
    }

    #[test]
    fn ridge_only_hessian_scales_noise() {
        let ds = zero_rows();
        let task = BinaryTask::binary(&ds).unwrap();
        let view = DatasetView::full(4);
        let lambda = 0.0625;
        let sgd_cfg = SgdConfig { epochs: 2, batch_size: 4, ..SgdConfig::default() };
        let cfg = FisherConfig { sigma: 1.0, minibatch: 1, noise_seed: 3 };
        let w = fisher_train(&task, &view, lambda, &sgd_cfg, &cfg).unwrap();
        let b = rng::standard_normal(&mut rng::substream(3, 0), 3);
        assert!((w - b * 2.0).amax() < 1e-12);

        let plain = fisher_train(&task, &view, lambda, &sgd_cfg, &FisherConfig { sigma: 0.0, ..cfg }).unwrap();
        assert_eq!(plain, DVector::zeros(3));
    }

    #[test]
    fn rejects_deleting_everything_or_bad_ids() {
        let ds = zero_rows();
        let task = BinaryTask::binary(&ds).unwrap();
        let view = DatasetView::full(4);
        let cfg = FisherConfig { sigma: 0.0, minibatch: 2, noise_seed: 0 };
        let w = DVector::zeros(3);
        assert!(matches!(fisher_unlearn(&w, &task, &view, &[0, 1, 2, 3], 0.1, &cfg), Err(Error::EmptySubset)));
        assert!(matches!(fisher_unlearn(&w, &task, &view, &[9], 0.1, &cfg), Err(Error::OutOfRange(9))));
        assert!(matches!(
            fisher_unlearn(&w, &task, &view, &[1], 0.1, &FisherConfig { minibatch: 0, ..cfg }),
            Err(Error::InvalidConfig(_))
        ));
    }
}
