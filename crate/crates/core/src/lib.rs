//! Unsupervised ensemble labeling of network-flow records and a small
//! neural detector trained on the resulting labels.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

// `!(a > b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod clustering;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod feature_select;
pub mod metrics;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = dataset::FeatureMatrix<f64>;
pub type Scaler = dataset::ScalerParams<f64>;
pub type Labeled = ensemble::LabeledDataset<f64>;
pub type Mlp = classifier::MlpModel<f64>;
pub type ClassReport = metrics::ClassificationReport<f64>;
pub type ClusterReport = metrics::ClusteringReport<f64>;
