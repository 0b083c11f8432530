//! Validation metrics for simulation-vs-measurement time series, and a
//! pipeline that fits a use-case specific "custom metric" to expert ratings.
//!
//! The pieces, bottom-up:
//! * [`series`]: loading and aligning signal pairs.
//! * [`metrics`]: the base metric library (RMSE family, Sprague-Geers, NISE,
//!   DTW, EEARTH- and ISO 18571-style scores).
//! * [`features`]: labeled dataset to feature matrix, correlated-feature
//!   pruning, leakage-free train/test splitting.
//! * [`regress`]: OLS/LASSO fits with prediction intervals.
//! * [`universe`]: a PT2 manufactured universe with synthetic experts.
//! * [`pipeline`]: split, prune, fit and score in one call.
//! * [`studies`]: hyperparameter sweeps over repeated random splits.

pub mod dataset;
pub mod features;
pub mod grade;
pub mod metrics;
pub mod pipeline;
pub mod regress;
pub mod seeds;
pub mod series;
pub mod stats;
pub mod studies;
pub mod universe;

pub use dataset::{LabeledDataset, LabeledRecord, Provenance};
pub use features::FeatureMatrix;
pub use grade::{grade, Grade, GradeTable};
pub use metrics::{full_report, MetricConfig, MetricReport};
pub use regress::{CustomMetricModel, PredictionInterval};
pub use series::{align_pair, AlignPolicy, SeriesPair, TimeSeries};
