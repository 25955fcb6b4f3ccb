//! Time-series segment retrieval with a learned difference-based distance.
//!
//! Segments of `K` consecutive multi-sensor rows are compared by feeding the
//! difference of two segments through an autoencoder trained on weighted
//! pairs; the reconstruction error is the distance. Euclidean and
//! autoencoder-embedding baselines share the same ranking and metric code.

pub mod baselines;
pub mod ddmm;
mod error;
pub mod eval;
pub mod exec;
pub mod ingest;
pub mod nn;
pub mod rank;
pub mod segment;

pub use error::{Error, Result};
