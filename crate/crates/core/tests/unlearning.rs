mod common;

use nalgebra::DVector;
use unlearn_core::dataset::DatasetView;
use unlearn_core::fisher::{fisher_unlearn, FisherConfig};
use unlearn_core::influence::{influence_unlearn, InfluenceConfig};
use unlearn_core::method::{self, MethodConfig, TrainSettings};
use unlearn_core::objective::{self, BinaryTask, ObjectiveConfig};
use unlearn_core::sgd::SgdConfig;
use unlearn_core::{linalg, Error};

use common::{blob_pair, clusters, gd_optimum};

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn fisher_and_influence_agree_at_the_optimum() {
    // At a stationary point the gradient on the kept data is the negated,
    // reweighted gradient on the removed data, so both updates coincide.
    let (ds, _) = blob_pair(400, 6, 2.0, 4);
    let task = BinaryTask::binary(&ds).unwrap();
    let all: Vec<usize> = (0..400).collect();
    let w = gd_optimum(&ds, &all, 1, 1e-3, 4.0, 1e-12);
    let view = DatasetView::full(400);
    let deleted = vec![3, 17, 90, 250, 399, 5, 6, 7];
    let f = fisher_unlearn(&w, &task, &view, &deleted, 1e-3, &FisherConfig { sigma: 0.0, minibatch: 8, noise_seed: 0 })
        .unwrap();
    let i = influence_unlearn(
        &w,
        &task,
        &view,
        &deleted,
        1e-3,
        &InfluenceConfig { sigma: 0.0, minibatch: 8, noise_seed: 0 },
    )
    .unwrap();
    assert!((f - i).amax() <= 1e-9);
}

#[test]
fn single_deletion_is_one_newton_step() {
    let (ds, _) = blob_pair(300, 4, 2.0, 8);
    let task = BinaryTask::binary(&ds).unwrap();
    let all: Vec<usize> = (0..300).collect();
    let w = gd_optimum(&ds, &all, 1, 1e-2, 4.0, 1e-10);
    let kept: Vec<usize> = (1..300).collect();
    let h = common::hessian_oracle(w.as_slice(), &ds, &kept, 1e-2);
    let g = DVector::from_vec(common::gradient_oracle(w.as_slice(), &ds, &kept, 1, 1e-2));
    let expected = &w - h.lu().solve(&g).unwrap();
    let out = fisher_unlearn(
        &w,
        &task,
        &DatasetView::full(300),
        &[0],
        1e-2,
        &FisherConfig { sigma: 0.0, minibatch: 1, noise_seed: 0 },
    )
    .unwrap();
    assert!((out - expected).amax() <= 1e-12);
}

#[test]
fn one_vs_rest_unlearning_tracks_retraining() {
    let ds = clusters(600, 6, 3, 2);
    let view = DatasetView::full(600);
    let settings = TrainSettings {
        lambda: 1e-3,
        sgd: SgdConfig { eta: 4.0, epochs: 3000, batch_size: 600, grad_tol: Some(1e-6), ..SgdConfig::default() },
    };
    let deleted: Vec<usize> = (0..600).step_by(50).collect();
    let kept = view.delete_points(&deleted).unwrap();
    for cfg in [
        MethodConfig::Fisher(FisherConfig { sigma: 0.0, minibatch: deleted.len(), noise_seed: 0 }),
        MethodConfig::Influence(InfluenceConfig { sigma: 0.0, minibatch: 4, noise_seed: 0 }),
    ] {
        let model = method::train_model(&ds, &view, &settings, &cfg).unwrap();
        let out = method::unlearn_model(&model, &ds, &view, &deleted, 1e-3, &cfg).unwrap();
        for (c, w) in out.weights().iter().enumerate() {
            let oracle = gd_optimum(&ds, kept.remaining(), c as u32, 1e-3, 4.0, 1e-9);
            assert!(rel(w, &oracle) <= 1e-3, "{:?} class {c}: {}", cfg.kind(), rel(w, &oracle));
        }
        if let Some(residual) = out.diagnostics.residual {
            assert!(residual <= 1e-4);
        }
    }
}

#[test]
fn smaller_minibatches_track_retraining_more_closely() {
    let (ds, _) = blob_pair(1000, 8, 2.0, 12);
    let task = BinaryTask::binary(&ds).unwrap();
    let view = DatasetView::full(1000);
    let all: Vec<usize> = (0..1000).collect();
    let w = gd_optimum(&ds, &all, 1, 1e-4, 4.0, 1e-9);
    let deleted: Vec<usize> = (0..1000).filter(|i| i % 10 == 3).collect();
    let oracle = gd_optimum(&ds, view.delete_points(&deleted).unwrap().remaining(), 1, 1e-4, 4.0, 1e-9);
    let mut errors = Vec::new();
    for minibatch in [1, 10, 100] {
        let cfg = FisherConfig { sigma: 0.0, minibatch, noise_seed: 0 };
        let out = fisher_unlearn(&w, &task, &view, &deleted, 1e-4, &cfg).unwrap();
        errors.push(rel(&out, &oracle));
    }
    assert!(errors.windows(2).all(|e| e[0] < e[1]), "{errors:?}");
    assert!(errors[2] <= 1e-2, "{errors:?}");
}

#[test]
fn indefinite_curvature_is_reported() {
    let ds = clusters(10, 3, 2, 1);
    let task = BinaryTask::binary(&ds).unwrap();
    let rows: Vec<usize> = (0..10).collect();
    // Zero rows and no ridge give a singular Hessian.
    let zero =
        unlearn_core::dataset::LabeledDataset::new(vec![0.0; 30], ds.labels().to_vec(), 3, ds.class_names().to_vec())
            .unwrap();
    let zero_task = BinaryTask::binary(&zero).unwrap();
    let h = objective::hessian(&DVector::zeros(3), &zero_task, &rows, &ObjectiveConfig::ridge(0.0)).unwrap();
    assert!(matches!(linalg::inverse_fourth_root(&h, 0.0), Err(Error::NotPositiveDefinite { .. })));
    assert!(objective::hessian(&DVector::zeros(3), &task, &rows, &ObjectiveConfig::ridge(0.0)).is_ok());
}
