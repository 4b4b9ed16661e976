//! Numerics lab for concatenated rectified linear units (CReLU).
//!
//! The crate bundles a small CNN training stack (tensors, layers with manual
//! backpropagation, optimizers, data ingestion) with the analysis machinery
//! around CReLU's reconstruction property: shift matrices, pseudoinverse
//! reconstruction, frame bounds, filter-pairing statistics, outgoing-weight
//! correlations and invariance scores. Everything is `f64` and seeded.

pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod pairing;
pub mod parallel;
pub mod recon;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use linalg::{pinv, svd, SvdResult};
pub use rng::{gaussian_unit_filters, RngStream};
pub use tensor::Tensor;
