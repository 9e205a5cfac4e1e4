//! Two-Gaussian-blob data for tests and offline experiments.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobSpec {
    pub n: usize,
    pub dim: usize,
    /// Distance between the two class means; unit variance per coordinate.
    pub separation: f64,
    /// Share of points in class 1.
    pub class_ratio: f64,
    /// Append a constant 1 feature so a linear model can learn an offset.
    pub intercept: bool,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self { n: 1000, dim: 10, separation: 2.0, class_ratio: 0.5, intercept: false, seed: 0 }
    }
}

/// Class `c` is drawn from `N(±(separation/2) e₁, I)`, minus for class 0.
/// With `intercept` the rows get one extra constant coordinate, so `dim + 1` columns.
pub fn blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    if spec.n == 0 || spec.dim == 0 {
        return Err(Error::InvalidConfig("blobs need n > 0 and dim > 0".into()));
    }
    if !(0.0..=1.0).contains(&spec.class_ratio) || !spec.separation.is_finite() {
        return Err(Error::InvalidConfig("class_ratio must be in [0, 1] and separation finite".into()));
    }
    let mut rng = rng::stream(spec.seed);
    let positives = (spec.class_ratio * spec.n as f64).round() as usize;
    let mut labels: Vec<u32> = (0..spec.n).map(|i| u32::from(i < positives)).collect();
    rng::shuffle(&mut rng, &mut labels);
    let mut features = Vec::with_capacity(spec.n * spec.dim);
    for &l in &labels {
        let z = rng::standard_normal(&mut rng, spec.dim);
        let shift = if l == 1 { spec.separation / 2.0 } else { -spec.separation / 2.0 };
        features.extend(z.iter().enumerate().map(|(j, v)| if j == 0 { v + shift } else { *v }));
        if spec.intercept {
            features.push(1.0);
        }
    }
    let cols = spec.dim + usize::from(spec.intercept);
    LabeledDataset::new(features, labels, cols, vec!["0".into(), "1".into()])
}

/// Independent train and test draws from the same two blobs.
pub fn blob_split(spec: &BlobSpec, n_test: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let train = blobs(spec)?;
    let test = blobs(&BlobSpec { n: n_test, seed: rng::derive_seed(spec.seed, 1), ..spec.clone() })?;
    Ok((train, test))
}
