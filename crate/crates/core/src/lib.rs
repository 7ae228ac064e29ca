//! Neural factorization classifiers for vibration fault diagnosis.
//!
//! Raw vibration windows are projected into two latent mode spaces by
//! learnable embedding matrices, fused into a single vibration feature
//! vector by either a weighted elementwise product (CP scheme) or a
//! core-weighted outer product (Tucker scheme), and classified by a
//! batch-normalized dense head. Everything — forward, backward, Adam,
//! the plateau scheduler, metrics — is implemented from scratch in 64-bit
//! floats and validated against independent oracles.
//!
//! Module map:
//! - [`signal`]: synthesis, ingest, windowing, standardization, splitting
//! - [`features`]: the 12 time-domain features for the classical baselines
//! - [`model`]: mode embeddings, CP/Tucker fusion, dense head, gradients
//! - [`train`]: cross-entropy, Adam, reduce-on-plateau, the epoch loop
//! - [`baselines`]: logistic regression and a plain MLP over features
//! - [`metrics`]: confusion matrices and support-weighted aggregates
//! - [`gradcheck`]: central finite-difference gradient verification
//! - [`checkpoint`]: versioned model serialization

pub mod baselines;
pub mod checkpoint;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod mat;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod signal;
pub mod train;

pub use error::{NfcError, Result};
