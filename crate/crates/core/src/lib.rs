//! Certifiable machine unlearning for L2-regularized logistic regression.
//!
//! The crate covers the whole train → infer → unlearn → audit lifecycle:
//!
//! * [`dataset`] ingests LIBSVM text, normalizes rows and tracks which points
//!   have been deleted.
//! * [`objective`] holds the regularized logistic loss with its gradient and
//!   Hessian, plus prediction and accuracy.
//! * [`sgd`] is a seeded, bit-reproducible mini-batch SGD trainer that can
//!   record its trajectory.
//! * [`fisher`], [`influence`] and [`deltagrad`] implement the three unlearning
//!   methods together with their noise-injecting training algorithms.
//! * [`sampler`] generates deletion sequences, [`metrics`] scores updated models
//!   against retrained ones, and [`pipeline`] ties everything into the
//!   employ-or-retrain state machine.

pub mod dataset;
pub mod deltagrad;
pub mod error;
pub mod fisher;
pub mod influence;
pub mod linalg;
pub mod method;
pub mod metrics;
pub mod objective;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod sgd;
pub mod synthetic;

pub use error::{Error, Result};
pub use method::{MethodConfig, MethodKind, TrainSettings, TrainedModel, UnlearnResult};
