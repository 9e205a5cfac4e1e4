//! Loads the train/test pair described by a [`DatasetConfig`].

use unlearn_core::dataset::{self, LabeledDataset, SplitSpec};
use unlearn_core::synthetic;

use crate::config::DatasetConfig;
use crate::error::CliResult;

#[derive(Debug, Clone)]
pub struct Loaded {
    pub name: String,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Factor the raw rows were divided by; 1 when not normalized.
    pub scale: f64,
}

/// Train and test share one scale, taken from the training rows.
pub fn load(cfg: &DatasetConfig) -> CliResult<Loaded> {
    let name = cfg.name();
    let (train, test, normalize) = match cfg {
        DatasetConfig::Blobs(b) => {
            let (train, test) = synthetic::blob_split(&b.spec(), b.n_test)?;
            (train, test, b.normalize)
        }
        DatasetConfig::Libsvm { train, test, binary_classes, normalize, .. } => {
            let spec = SplitSpec {
                train_path: train.clone(),
                test_path: test.clone(),
                binary_classes: binary_classes.clone(),
            };
            let (train, test) = dataset::load_split(&spec)?;
            (train, test, *normalize)
        }
        DatasetConfig::Cache { train, test, .. } => (dataset::load_cache(train)?, dataset::load_cache(test)?, false),
    };
    if !normalize {
        return Ok(Loaded { name, train, test, scale: 1.0 });
    }
    let (train, scale) = dataset::max_l2_normalize(&train)?;
    let test = dataset::apply_scale(&test, scale);
    Ok(Loaded { name, train, test, scale })
}
