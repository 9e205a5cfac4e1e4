#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use unlearn_core::dataset::{self, LabeledDataset};
use unlearn_core::rng;
use unlearn_core::synthetic::{blob_split, BlobSpec};

/// Normalized two-blob train/test split with an intercept column.
pub fn blob_pair(n: usize, dim: usize, separation: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
    let spec = BlobSpec { n, dim, separation, class_ratio: 0.5, intercept: true, seed };
    let (train, test) = blob_split(&spec, n).unwrap();
    let (train, scale) = dataset::max_l2_normalize(&train).unwrap();
    (train, dataset::apply_scale(&test, scale))
}

/// `k` Gaussian clusters centred on the first `k` axes, rows scaled into the unit ball.
pub fn clusters(n: usize, dim: usize, k: usize, seed: u64) -> LabeledDataset {
    let mut rng = rng::stream(seed);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        labels.push(c as u32);
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(0.5 * z + if j == c { 2.0 } else { 0.0 });
        }
    }
    let ds = LabeledDataset::new(features, labels, dim, (0..k).map(|c| c.to_string()).collect()).unwrap();
    dataset::max_l2_normalize(&ds).unwrap().0
}

pub fn sign(ds: &LabeledDataset, i: usize, positive: u32) -> f64 {
    if ds.label(i) == positive {
        1.0
    } else {
        -1.0
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean logistic loss plus ridge, summed one point at a time.
pub fn loss_oracle(w: &[f64], ds: &LabeledDataset, rows: &[usize], positive: u32, lambda: f64) -> f64 {
    let mut total = 0.0;
    for &i in rows {
        let z = sign(ds, i, positive) * ds.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        total += (1.0 + (-z).exp()).ln();
    }
    total / rows.len() as f64 + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Gradient of [`loss_oracle`], written out coordinate by coordinate.
pub fn gradient_oracle(w: &[f64], ds: &LabeledDataset, rows: &[usize], positive: u32, lambda: f64) -> Vec<f64> {
    let d = w.len();
    let mut g = vec![0.0; d];
    for &i in rows {
        let y = sign(ds, i, positive);
        let x = ds.row(i);
        let z = y * x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        let coef = -y * sigmoid(-z);
        for j in 0..d {
            g[j] += coef * x[j];
        }
    }
    (0..d).map(|j| g[j] / rows.len() as f64 + lambda * w[j]).collect()
}

/// Hessian as a sum of per-point outer products.
pub fn hessian_oracle(w: &[f64], ds: &LabeledDataset, rows: &[usize], lambda: f64) -> DMatrix<f64> {
    let d = w.len();
    let mut h = DMatrix::identity(d, d) * lambda;
    for &i in rows {
        let x = ds.row(i);
        let s = sigmoid(x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
        let weight = s * (1.0 - s) / rows.len() as f64;
        for a in 0..d {
            for b in 0..d {
                h[(a, b)] += weight * x[a] * x[b];
            }
        }
    }
    h
}

/// Plain gradient descent on the remaining rows until the gradient norm is at most `tol`.
pub fn gd_optimum(
    ds: &LabeledDataset,
    rows: &[usize],
    positive: u32,
    lambda: f64,
    step: f64,
    tol: f64,
) -> DVector<f64> {
    let mut w = vec![0.0; ds.dim()];
    for _ in 0..200_000 {
        let g = gradient_oracle(&w, ds, rows, positive, lambda);
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() <= tol {
            return DVector::from_vec(w);
        }
        for (wj, gj) in w.iter_mut().zip(&g) {
            *wj -= step * gj;
        }
    }
    panic!("gradient descent oracle did not reach {tol}");
}
