//! Kolmogorov-Arnold and MLP classifiers for univariate time series, with
//! hand-written gradients, AdamW training, PGD attacks, empirical local
//! Lipschitz estimation and the statistics used to compare models across
//! datasets.

pub mod data;
pub mod error;
pub mod evalstats;
pub mod gradcheck;
pub mod kan;
pub mod layer;
pub mod mlp;
pub mod models;
pub mod robust;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use layer::{grad_check, grad_check_sampled, CheckReport, Layer, Sequential};
pub use models::{build_model, Arch, Model, ModelConfig};
pub use tensor::{Param, Tensor};
