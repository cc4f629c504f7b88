//! Fusion of structural and functional brain connectivity with a
//! disentangled variational GCN, for classifying stages of mild cognitive
//! impairment.
//!
//! Everything runs on a small define-by-run autodiff tape over dense `f64`
//! tensors; see [`tape`] and [`model`].

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{HscfError, Result};
pub use model::{HscfModel, ModelConfig, ModelOutput};
pub use tensor::Tensor;
