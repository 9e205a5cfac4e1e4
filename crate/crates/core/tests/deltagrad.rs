mod common;

use std::collections::BTreeSet;

use nalgebra::DVector;
use unlearn_core::dataset::DatasetView;
use unlearn_core::deltagrad::{dg_train, dg_unlearn, DeltaGradConfig};
use unlearn_core::objective::BinaryTask;
use unlearn_core::rng;
use unlearn_core::sgd::SgdConfig;

use common::{blob_pair, gradient_oracle};

fn config(burn_in: usize, t0_period: usize) -> DeltaGradConfig {
    DeltaGradConfig { t0_period, burn_in, history: 2, sigma: 0.0, noise_seed: 0 }
}

/// SGD over the recorded batches with the deleted points dropped from each.
fn leave_out_replay(
    ds: &unlearn_core::dataset::LabeledDataset,
    batches: &[Vec<usize>],
    deleted: &BTreeSet<usize>,
    eta: f64,
    lambda: f64,
) -> Vec<f64> {
    let mut w = vec![0.0; ds.dim()];
    for batch in batches {
        let keep: Vec<usize> = batch.iter().copied().filter(|i| !deleted.contains(i)).collect();
        if keep.is_empty() {
            continue;
        }
        let g = gradient_oracle(&w, ds, &keep, 1, lambda);
        for (wj, gj) in w.iter_mut().zip(&g) {
            *wj -= eta * gj;
        }
    }
    w
}

#[test]
fn exact_replay_matches_leave_out_sgd() {
    let (ds, _) = blob_pair(300, 6, 2.0, 1);
    let task = BinaryTask::binary(&ds).unwrap();
    let view = DatasetView::full(300);
    let sgd = SgdConfig { eta: 1.0, epochs: 20, batch_size: 64, grad_tol: None, seed: 9, ..SgdConfig::default() };
    let cfg = config(10_000, 5);
    let model = dg_train(&task, &view, 1e-3, &sgd, &cfg).unwrap();
    let deleted: Vec<usize> = (0..300).filter(|i| i % 13 == 2).collect();
    let out = dg_unlearn(&model.trajectory, &model.schedule, &task, &view, &deleted, 1e-3, &cfg).unwrap();
    let oracle = leave_out_replay(&ds, &model.schedule.batches, &deleted.iter().copied().collect(), 1.0, 1e-3);
    for (a, b) in out.weights.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert_eq!(out.stats.exact, model.schedule.iterations());
    assert_eq!(out.stats.approximate, 0);
}

#[test]
fn schedule_is_a_partition_per_epoch() {
    let (ds, _) = blob_pair(100, 3, 2.0, 2);
    let task = BinaryTask::binary(&ds).unwrap();
    let view = DatasetView::full(100).delete_points(&[4, 5, 6]).unwrap();
    let sgd = SgdConfig { epochs: 3, batch_size: 30, grad_tol: None, ..SgdConfig::default() };
    let model = dg_train(&task, &view, 1e-3, &sgd, &config(0, 1)).unwrap();
    // 97 points in batches of 30: four batches per epoch.
    assert_eq!(model.schedule.iterations(), 12);
    for epoch in model.schedule.batches.chunks(4) {
        let mut ids: Vec<usize> = epoch.iter().flatten().copied().collect();
        ids.sort_unstable();
        assert_eq!(ids, view.remaining());
    }
}

#[test]
fn empty_deletion_returns_the_trained_model() {
    let (ds, _) = blob_pair(200, 5, 2.0, 3);
    let task = BinaryTask::binary(&ds).unwrap();
    let view = DatasetView::full(200);
    let sgd = SgdConfig { epochs: 10, batch_size: 50, grad_tol: None, ..SgdConfig::default() };
    let cfg = config(3, 4);
    let model = dg_train(&task, &view, 1e-3, &sgd, &cfg).unwrap();
    let out = dg_unlearn(&model.trajectory, &model.schedule, &task, &view, &[], 1e-3, &cfg).unwrap();
    assert_eq!(out.weights, model.weights);
    assert_eq!(out.trajectory, model.trajectory);
}

#[test]
fn approximate_replay_stays_near_exact_replay() {
    let (ds, _) = blob_pair(1000, 10, 2.0, 4);
    let task = BinaryTask::binary(&ds).unwrap();
    let view = DatasetView::full(1000);
    let sgd = SgdConfig { epochs: 30, batch_size: 200, grad_tol: None, ..SgdConfig::default() };
    let deleted: Vec<usize> = (0..1000).filter(|i| i % 100 == 7).collect();
    let exact = {
        let cfg = config(usize::MAX - 1, 1);
        let model = dg_train(&task, &view, 1e-4, &sgd, &cfg).unwrap();
        dg_unlearn(&model.trajectory, &model.schedule, &task, &view, &deleted, 1e-4, &cfg).unwrap().weights
    };
    let cfg = config(10, 5);
    let model = dg_train(&task, &view, 1e-4, &sgd, &cfg).unwrap();
    let out = dg_unlearn(&model.trajectory, &model.schedule, &task, &view, &deleted, 1e-4, &cfg).unwrap();
    assert!(out.stats.approximate > out.stats.exact);
    let gap = (&out.weights - &exact).norm() / exact.norm();
    let moved = (&model.weights - &exact).norm() / exact.norm();
    assert!(gap < 0.1 * moved, "gap {gap} moved {moved}");
}

#[test]
fn replayed_trajectory_is_self_consistent() {
    let (ds, _) = blob_pair(150, 4, 2.0, 5);
    let task = BinaryTask::binary(&ds).unwrap();
    let view = DatasetView::full(150);
    let sgd = SgdConfig { eta: 0.5, epochs: 8, batch_size: 40, grad_tol: None, ..SgdConfig::default() };
    let cfg = config(2, 3);
    let model = dg_train(&task, &view, 1e-3, &sgd, &cfg).unwrap();
    let out = dg_unlearn(&model.trajectory, &model.schedule, &task, &view, &[1, 2, 3, 4], 1e-3, &cfg).unwrap();
    let records = &out.trajectory.records;
    for pair in records.windows(2) {
        let (w, g) = &pair[0];
        assert!((w - g * 0.5 - &pair[1].0).amax() <= 1e-15);
    }
    assert_eq!(out.trajectory.final_weights().unwrap(), out.weights);
}

#[test]
fn fresh_noise_is_added_after_replay() {
    let (ds, _) = blob_pair(120, 4, 2.0, 6);
    let task = BinaryTask::binary(&ds).unwrap();
    let view = DatasetView::full(120);
    let sgd = SgdConfig { epochs: 4, batch_size: 40, grad_tol: None, ..SgdConfig::default() };
    let cfg = DeltaGradConfig { sigma: 0.3, noise_seed: 77, ..config(100, 1) };
    let model = dg_train(&task, &view, 1e-3, &sgd, &cfg).unwrap();
    let clean = model.trajectory.final_weights().unwrap();
    let b0 = rng::standard_normal(&mut rng::substream(77, 0), 5);
    assert!((&model.weights - (&clean + b0 * 0.3)).amax() <= 1e-15);
    let out = dg_unlearn(&model.trajectory, &model.schedule, &task, &view, &[0], 1e-3, &cfg).unwrap();
    let b1 = rng::standard_normal(&mut rng::substream(77, 1), 5);
    let replayed: DVector<f64> = out.trajectory.final_weights().unwrap();
    assert!((&out.weights - (replayed + b1 * 0.3)).amax() <= 1e-15);
}
