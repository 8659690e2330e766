//! Greenhouse sensor anomaly detection toolkit.
//!
//! The pipeline: ingest or simulate minute-resolution multivariate sensor
//! data, label anomalies with threshold rules, scrub them from training data,
//! train a dense autoencoder on min-max-normalized normal data, calibrate a
//! reconstruction-loss threshold from validation losses, and classify test
//! points by whether their loss lies above it.
//!
//! The numeric core (scaler, network, threshold math) is generic over
//! [`scalar::Scalar`] (`f32` or `f64`); the type aliases at the crate root
//! pin the pipeline to `f64`, which the gradient and determinism contracts
//! assume.

pub mod autoencoder;
pub mod data;
pub mod detect;
pub mod error;
pub mod inject;
pub mod model;
pub mod rules;
pub mod scalar;
pub mod scale;
pub mod simulate;
pub mod time;
pub mod train;

pub use error::{Error, Result};

/// Pipeline-precision aliases. All persisted artifacts use these.
pub type FeatureMatrix = scale::FeatureMatrix<f64>;
pub type ScalerParams = scale::ScalerParams<f64>;
pub type Parameters = autoencoder::Parameters<f64>;
pub type Gradients = autoencoder::Gradients<f64>;
pub type Threshold = detect::Threshold<f64>;
