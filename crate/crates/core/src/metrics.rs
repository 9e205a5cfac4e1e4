//! Effectiveness, certifiability and efficiency measures.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Accuracy;

/// Symmetric absolute percentage error, with `sape(0, 0) = 0`.
pub fn sape(a: f64, b: f64) -> f64 {
    let denom = a.abs() + b.abs();
    if denom == 0.0 {
        0.0
    } else {
        (b - a).abs() / denom * 100.0
    }
}

/// Test-accuracy error of an updated model against the noise-free retrained one.
pub fn acc_err(acc_opt: f64, acc_updated: f64) -> f64 {
    sape(acc_opt, acc_updated)
}

/// Deleted-set accuracy disparity between retrained and updated models.
pub fn acc_dis(acc_del_retrained: Accuracy, acc_del_updated: Accuracy) -> Result<f64> {
    if acc_del_retrained.total == 0 || acc_del_updated.total == 0 {
        return Err(Error::EmptySubset);
    }
    Ok(sape(acc_del_retrained.fraction(), acc_del_updated.fraction()))
}

pub fn speedup(t_retrain: Duration, t_unlearn: Duration) -> Result<f64> {
    if t_unlearn.is_zero() {
        return Err(Error::ZeroDuration);
    }
    Ok(t_retrain.as_secs_f64() / t_unlearn.as_secs_f64())
}

pub fn median_duration(samples: &[Duration]) -> Option<Duration> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 { sorted[mid] } else { (sorted[mid - 1] + sorted[mid]) / 2 })
}

/// Pearson correlation; `None` if fewer than two points or a constant series.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Everything measured for one unlearning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc_test_updated: Accuracy,
    pub acc_test_retrained_opt: Accuracy,
    pub acc_test_retrained_sigma: Accuracy,
    pub acc_del_updated: Accuracy,
    pub acc_del_retrained: Accuracy,
    pub time_unlearn: Duration,
    pub time_retrain: Duration,
}

impl EvalReport {
    pub fn acc_err(&self) -> f64 {
        acc_err(self.acc_test_retrained_opt.fraction(), self.acc_test_updated.fraction())
    }

    pub fn acc_dis(&self) -> Result<f64> {
        acc_dis(self.acc_del_retrained, self.acc_del_updated)
    }

    pub fn speedup(&self) -> Result<f64> {
        speedup(self.time_retrain, self.time_unlearn)
    }
}
