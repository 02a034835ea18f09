//! Blockwise PCA imputation (BPI) for data with a monotone missing pattern.
//!
//! Each block of features is reduced with PCA using only the samples that
//! observe it; the per-block scores are stacked into a much smaller matrix
//! with staircase missingness, and only that matrix is imputed.

pub mod bench;
pub mod bounds;
pub mod error;
pub mod impute;
pub mod linalg;
pub mod monotone;
pub mod pca;
pub mod pipeline;

pub use error::{Error, Result};
pub use linalg::{MaskedMatrix, Spectrum};
