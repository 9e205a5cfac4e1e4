//! L2-regularized logistic loss, its derivatives, and prediction.
//!
//! All routines average over an explicit list of row ids so the same code
//! serves the remaining set, a mini-batch, or the deleted set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda: f64,
    pub sigma: f64,
    /// The draw `b` of the linear noise term, required when `sigma > 0`.
    pub noise: Option<DVector<f64>>,
}

impl ObjectiveConfig {
    pub fn ridge(lambda: f64) -> Self {
        Self { lambda, sigma: 0.0, noise: None }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        match &self.noise {
            Some(b) if b.len() != dim => Err(Error::DimensionMismatch { expected: dim, found: b.len() }),
            None if self.sigma > 0.0 => Err(Error::InvalidConfig("sigma > 0 requires a noise draw".into())),
            _ => Ok(()),
        }
    }
}

/// A dataset seen as one binary problem with labels in {-1, +1}.
#[derive(Debug, Clone)]
pub struct BinaryTask<'a> {
    ds: &'a LabeledDataset,
    signs: Vec<f64>,
}

impl<'a> BinaryTask<'a> {
    /// Class 1 is the positive class; requires at most two classes.
    pub fn binary(ds: &'a LabeledDataset) -> Result<Self> {
        if ds.num_classes() > 2 {
            return Err(Error::InvalidConfig(format!("binary task on {} classes; use one-vs-rest", ds.num_classes())));
        }
        Ok(Self::one_vs_rest(ds, 1))
    }

    /// Class `positive` against every other class.
    pub fn one_vs_rest(ds: &'a LabeledDataset, positive: u32) -> Self {
        let signs = ds.labels().iter().map(|&l| if l == positive { 1.0 } else { -1.0 }).collect();
        Self { ds, signs }
    }

    pub fn dataset(&self) -> &'a LabeledDataset {
        self.ds
    }

    pub fn dim(&self) -> usize {
        self.ds.dim()
    }

    pub fn sign(&self, i: usize) -> f64 {
        self.signs[i]
    }

    /// A single binary task for two classes, otherwise one OVR task per class.
    pub fn for_dataset(ds: &'a LabeledDataset) -> Vec<Self> {
        if ds.num_classes() <= 2 {
            vec![Self::one_vs_rest(ds, 1)]
        } else {
            (0..ds.num_classes() as u32).map(|c| Self::one_vs_rest(ds, c)).collect()
        }
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn log1pexp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(w: &DVector<f64>, task: &BinaryTask, rows: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptySubset);
    }
    if w.len() != task.dim() {
        return Err(Error::DimensionMismatch { expected: task.dim(), found: w.len() });
    }
    Ok(())
}

/// Sum over `rows` of the per-point loss gradient, without averaging or ridge.
pub fn data_gradient_sum(w: &DVector<f64>, task: &BinaryTask, rows: &[usize]) -> DVector<f64> {
    let mut g = DVector::zeros(w.len());
    let ws = w.as_slice();
    for &i in rows {
        let x = task.ds.row(i);
        let y = task.signs[i];
        let coef = -y * sigmoid(-y * dot(ws, x));
        for (gj, xj) in g.iter_mut().zip(x) {
            *gj += coef * xj;
        }
    }
    g
}

pub fn loss(w: &DVector<f64>, task: &BinaryTask, rows: &[usize], cfg: &ObjectiveConfig) -> Result<f64> {
    check(w, task, rows)?;
    let ws = w.as_slice();
    let total: f64 = rows.iter().map(|&i| log1pexp(-task.signs[i] * dot(ws, task.ds.row(i)))).sum();
    Ok(total / rows.len() as f64 + 0.5 * cfg.lambda * w.norm_squared())
}

pub fn gradient(w: &DVector<f64>, task: &BinaryTask, rows: &[usize], cfg: &ObjectiveConfig) -> Result<DVector<f64>> {
    check(w, task, rows)?;
    let mut g = data_gradient_sum(w, task, rows);
    g /= rows.len() as f64;
    g.axpy(cfg.lambda, w, 1.0);
    Ok(g)
}

/// `(1/|D|) Σ p(1-p) x xᵀ + λI`; also the Fisher matrix of the model.
pub fn hessian(w: &DVector<f64>, task: &BinaryTask, rows: &[usize], cfg: &ObjectiveConfig) -> Result<DMatrix<f64>> {
    check(w, task, rows)?;
    let d = w.len();
    let ws = w.as_slice();
    // Rows of `a` are sqrt(p(1-p)) x_i so that the sum is aᵀa.
    let mut a = DMatrix::zeros(rows.len(), d);
    for (r, &i) in rows.iter().enumerate() {
        let x = task.ds.row(i);
        let p = sigmoid(dot(ws, x));
        let s = (p * (1.0 - p)).sqrt();
        for (j, xj) in x.iter().enumerate() {
            a[(r, j)] = s * xj;
        }
    }
    let mut h = a.tr_mul(&a);
    h /= rows.len() as f64;
    for j in 0..d {
        h[(j, j)] += cfg.lambda;
    }
    Ok(crate::linalg::symmetrize(h))
}

fn noise_term(cfg: &ObjectiveConfig, dim: usize) -> Result<Option<&DVector<f64>>> {
    if cfg.sigma == 0.0 {
        return Ok(None);
    }
    match &cfg.noise {
        Some(b) if b.len() == dim => Ok(Some(b)),
        Some(b) => Err(Error::DimensionMismatch { expected: dim, found: b.len() }),
        None => Err(Error::InvalidConfig("sigma > 0 requires a noise draw".into())),
    }
}

/// `L + σ bᵀw / |D|`.
pub fn noisy_loss(w: &DVector<f64>, task: &BinaryTask, rows: &[usize], cfg: &ObjectiveConfig) -> Result<f64> {
    let base = loss(w, task, rows, cfg)?;
    Ok(match noise_term(cfg, w.len())? {
        Some(b) => base + cfg.sigma * b.dot(w) / rows.len() as f64,
        None => base,
    })
}

/// `∇L + σ b / |D|`.
pub fn noisy_gradient(
    w: &DVector<f64>,
    task: &BinaryTask,
    rows: &[usize],
    cfg: &ObjectiveConfig,
) -> Result<DVector<f64>> {
    let mut g = gradient(w, task, rows, cfg)?;
    if let Some(b) = noise_term(cfg, w.len())? {
        g.axpy(cfg.sigma / rows.len() as f64, b, 1.0);
    }
    Ok(g)
}

/// Correct / total counts; kept exact until a percentage is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: usize,
    pub total: usize,
}

impl Accuracy {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// A trained linear model: one weight vector, or one per class.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    /// Score `w·x >= 0` predicts class 1.
    Binary(DVector<f64>),
    /// Highest score wins; ties go to the lowest class id.
    OneVsRest(Vec<DVector<f64>>),
}

impl Classifier {
    /// Wraps per-task weights produced for [`BinaryTask::for_dataset`].
    pub fn from_tasks(mut weights: Vec<DVector<f64>>) -> Self {
        if weights.len() == 1 {
            Classifier::Binary(weights.pop().expect("one weight vector"))
        } else {
            Classifier::OneVsRest(weights)
        }
    }

    pub fn weights(&self) -> &[DVector<f64>] {
        match self {
            Classifier::Binary(w) => std::slice::from_ref(w),
            Classifier::OneVsRest(ws) => ws,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights()[0].len()
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(self.weights().iter().map(|w| dot(w.as_slice(), x)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<u32> {
        let scores = self.scores(x)?;
        Ok(match self {
            Classifier::Binary(_) => u32::from(scores[0] >= 0.0),
            Classifier::OneVsRest(_) => {
                let mut best = 0;
                for (c, s) in scores.iter().enumerate() {
                    if *s > scores[best] {
                        best = c;
                    }
                }
                best as u32
            }
        })
    }

    /// Accuracy over the listed rows of `ds`.
    pub fn accuracy_on(&self, ds: &LabeledDataset, rows: &[usize]) -> Result<Accuracy> {
        let mut correct = 0;
        for &i in rows {
            if self.predict(ds.row(i))? == ds.label(i) {
                correct += 1;
            }
        }
        Ok(Accuracy { correct, total: rows.len() })
    }

    pub fn accuracy(&self, ds: &LabeledDataset) -> Result<Accuracy> {
        let rows: Vec<usize> = (0..ds.len()).collect();
        self.accuracy_on(ds, &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(features: Vec<f64>, labels: Vec<u32>, dim: usize) -> LabeledDataset {
        let k = *labels.iter().max().unwrap() as usize + 1;
        LabeledDataset::new(features, labels, dim, (0..k.max(2)).map(|c| c.to_string()).collect()).unwrap()
    }

    #[test]
    fn loss_at_zero_is_log_two() {
        let ds = toy(vec![1.0, 2.0, -3.0, 0.5], vec![0, 1], 2);
        let task = BinaryTask::binary(&ds).unwrap();
        let l = loss(&DVector::zeros(2), &task, &[0, 1], &ObjectiveConfig::ridge(2.0)).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_point_values() {
        let ds = toy(vec![1.0, 0.0], vec![1], 2);
        let task = BinaryTask::binary(&ds).unwrap();
        let cfg = ObjectiveConfig::ridge(0.0);
        let l = loss(&DVector::from_vec(vec![2.0, 0.0]), &task, &[0], &cfg).unwrap();
        assert!((l - (1.0 + (-2f64).exp()).ln()).abs() < 1e-15);
        assert!((l - 0.126928).abs() < 1e-6);

        let g = gradient(&DVector::zeros(2), &task, &[0], &cfg).unwrap();
        assert_eq!(g.as_slice(), &[-0.5, 0.0]);

        let h = hessian(&DVector::zeros(2), &task, &[0], &cfg).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn symmetric_pairs_cancel() {
        let ds = toy(vec![1.0, 2.0, 1.0, 2.0], vec![1, 0], 2);
        let task = BinaryTask::binary(&ds).unwrap();
        let g = gradient(&DVector::zeros(2), &task, &[0, 1], &ObjectiveConfig::ridge(0.3)).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_rows_give_ridge_hessian() {
        let ds = toy(vec![0.0; 6], vec![0, 1, 1], 2);
        let task = BinaryTask::binary(&ds).unwrap();
        let w = DVector::from_vec(vec![0.7, -1.0]);
        let h = hessian(&w, &task, &[0, 1, 2], &ObjectiveConfig::ridge(0.1)).unwrap();
        assert_eq!(h, DMatrix::identity(2, 2) * 0.1);
    }

    #[test]
    fn empty_subset_and_mismatch_are_errors() {
        let ds = toy(vec![1.0, 0.0], vec![1], 2);
        let task = BinaryTask::binary(&ds).unwrap();
        let cfg = ObjectiveConfig::ridge(0.0);
        assert!(matches!(loss(&DVector::zeros(2), &task, &[], &cfg), Err(Error::EmptySubset)));
        assert!(matches!(gradient(&DVector::zeros(3), &task, &[0], &cfg), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn noisy_objective_adds_scaled_linear_term() {
        let ds = toy(vec![0.1; 20], vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 2);
        let task = BinaryTask::binary(&ds).unwrap();
        let rows: Vec<usize> = (0..10).collect();
        let w = DVector::from_vec(vec![3.0, 1.0]);
        let cfg = ObjectiveConfig { lambda: 0.0, sigma: 1.0, noise: Some(DVector::from_vec(vec![1.0, 0.0])) };
        let offset = noisy_loss(&w, &task, &rows, &cfg).unwrap() - loss(&w, &task, &rows, &cfg).unwrap();
        assert!((offset - 0.3).abs() < 1e-15);

        let missing = ObjectiveConfig { noise: None, ..cfg.clone() };
        assert!(matches!(noisy_loss(&w, &task, &rows, &missing), Err(Error::InvalidConfig(_))));
        let off = ObjectiveConfig { sigma: 0.0, noise: None, ..cfg };
        assert_eq!(noisy_loss(&w, &task, &rows, &off).unwrap(), loss(&w, &task, &rows, &off).unwrap());
    }

    #[test]
    fn prediction_rules() {
        let binary = Classifier::Binary(DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(binary.predict(&[0.5, 0.0]).unwrap(), 1);
        assert_eq!(binary.predict(&[0.0, 3.0]).unwrap(), 1);
        assert_eq!(binary.predict(&[-0.5, 0.0]).unwrap(), 0);
        assert!(binary.predict(&[1.0]).is_err());

        let ds = toy(vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.2, 0.1], vec![0, 1, 2, 2], 2);
        let zero = Classifier::OneVsRest(vec![DVector::zeros(2); 3]);
        for i in 0..ds.len() {
            assert_eq!(zero.predict(ds.row(i)).unwrap(), 0);
        }
        assert_eq!(zero.accuracy(&ds).unwrap(), Accuracy { correct: 1, total: 4 });
    }

    #[test]
    fn ovr_matches_brute_force_argmax() {
        let ws = vec![
            DVector::from_vec(vec![1.0, -0.5]),
            DVector::from_vec(vec![-0.3, 0.8]),
            DVector::from_vec(vec![-0.7, -0.4]),
        ];
        let model = Classifier::OneVsRest(ws.clone());
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let x = [t.cos(), t.sin()];
            let scores: Vec<f64> = ws.iter().map(|w| w[0] * x[0] + w[1] * x[1]).collect();
            let mut best = 0;
            for c in 1..3 {
                if scores[c] > scores[best] {
                    best = c;
                }
            }
            assert_eq!(model.predict(&x).unwrap(), best as u32);
        }
    }

    fn arb_instance() -> impl Strategy<Value = (LabeledDataset, DVector<f64>, DVector<f64>)> {
        (1usize..6, 2usize..12).prop_flat_map(|(d, n)| {
            (
                proptest::collection::vec(-1.0f64..1.0, n * d),
                proptest::collection::vec(0u32..2, n),
                proptest::collection::vec(-3.0f64..3.0, d),
                proptest::collection::vec(-3.0f64..3.0, d),
            )
                .prop_map(move |(f, l, a, b)| {
                    (
                        LabeledDataset::new(f, l, d, vec!["0".into(), "1".into()]).unwrap(),
                        DVector::from_vec(a),
                        DVector::from_vec(b),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn loss_is_convex_along_segments((ds, w1, w2) in arb_instance(), alpha in 0.0f64..1.0) {
            let task = BinaryTask::binary(&ds).unwrap();
            let rows: Vec<usize> = (0..ds.len()).collect();
            let cfg = ObjectiveConfig::ridge(0.01);
            let mid = &w1 * alpha + &w2 * (1.0 - alpha);
            let lhs = loss(&mid, &task, &rows, &cfg).unwrap();
            let rhs = alpha * loss(&w1, &task, &rows, &cfg).unwrap()
                + (1.0 - alpha) * loss(&w2, &task, &rows, &cfg).unwrap();
            prop_assert!(lhs <= rhs + 1e-10);
        }

        #[test]
        fn hessian_is_symmetric_and_bounded_below((ds, w, _) in arb_instance(), lambda in 1e-3f64..1.0) {
            let task = BinaryTask::binary(&ds).unwrap();
            let rows: Vec<usize> = (0..ds.len()).collect();
            let h = hessian(&w, &task, &rows, &ObjectiveConfig::ridge(lambda)).unwrap();
            prop_assert!((&h - h.transpose()).amax() <= 1e-12);
            let min = h.symmetric_eigenvalues().min();
            prop_assert!(min >= lambda - 1e-8);
        }

        #[test]
        fn accuracy_is_scale_invariant((ds, w, _) in arb_instance(), scale in 1e-3f64..1e3) {
            let a = Classifier::Binary(w.clone()).accuracy(&ds).unwrap();
            let b = Classifier::Binary(w * scale).accuracy(&ds).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn noisy_gradient_offset_is_exact((ds, w, b) in arb_instance(), sigma in 0.0f64..5.0) {
            let task = BinaryTask::binary(&ds).unwrap();
            let rows: Vec<usize> = (0..ds.len()).collect();
            let cfg = ObjectiveConfig { lambda: 0.1, sigma, noise: Some(b.clone()) };
            let diff = noisy_gradient(&w, &task, &rows, &cfg).unwrap() - gradient(&w, &task, &rows, &cfg).unwrap();
            let expected = b * (sigma / rows.len() as f64);
            prop_assert!((diff - expected).amax() <= 1e-15);
        }
    }
}
