//! Selective disk scrubbing.
//!
//! Per-disk health comes from a Mondrian (class-conditional) inductive
//! conformal predictor wrapped around a k-nearest-neighbor classifier on
//! SMART telemetry. Only functional disks whose confidence falls below the
//! administrator's healthy floor get scrubbed, at a frequency set by their
//! score band. Scrubs are placed in hours a fuzzy time-series forecast
//! expects to be idle.
//!
//! Numeric modules are generic over [`Scalar`] (`f32` or `f64`), and p-values
//! can also be exact [`num_rational::Ratio`]s. The aliases below fix the
//! scalar to `f64`, which is what the pipeline and CLI use.

// `!(a < b)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod error;
pub mod forecast;
pub mod health;
pub mod ingest;
pub mod knn;
pub mod label;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use label::{Label, Labeled};
pub use scalar::Scalar;

pub type DiskSample = ingest::DiskSample<f64>;
pub type DiskSampleTable = ingest::DiskSampleTable<f64>;
pub type UtilizationSeries = ingest::UtilizationSeries<f64>;
pub type KnnModel = knn::KnnModel<f64>;
pub type ClassProbabilities = knn::ClassProbabilities<f64>;
pub type CalibrationTable = conformal::CalibrationTable<f64>;
pub type PValueVector = conformal::PValueVector<f64>;
pub type PredictionSet = conformal::PredictionSet<f64>;
pub type ConfidenceCredibility = conformal::ConfidenceCredibility<f64>;
pub type PwftsModel = forecast::PwftsModel<f64>;
pub type FuzzyPartition = forecast::FuzzyPartition<f64>;
pub type ForecastDistribution = forecast::ForecastDistribution<f64>;

/// Exact p-values as reduced fractions.
pub type ExactPValueVector = conformal::PValueVector<num_rational::Ratio<u64>>;
