//! Base and combined validation metrics between a test signal `x`
//! (simulation) and a reference signal `y` (measurement).
//!
//! Functions take plain slices so they can be used on any pair of equal-length
//! signals; [`full_report`] is the entry point for a validated
//! [`SeriesPair`](crate::series::SeriesPair) and computes every feature the
//! custom metric can draw on.

mod basic;
mod combined;
mod dtw;
mod eearth;
mod iso;
mod psi;
mod report;
mod xcorr;

pub use basic::{
    basic_errors, explained_variance, frac_explained_abs, maxae, mae, medae, mse, nrmse,
    pearson, r2, rmse, BasicErrors, Normalizer,
};
pub use combined::{nise, nise_from_scan, russell_magnitude, sprague_geers, NiseDecomposition, SpragueGeers};
pub use dtw::{dtw_align, DtwAlignment};
pub use eearth::{combine_eearth, eearth, Eearth, EearthWeights};
pub use iso::{corridor_score, iso18571_scores, iso_rating, CorridorBounds, Iso18571Scores};
pub use psi::{psi_stats, PsiStats};
pub use report::{full_report, MetricConfig, MetricEntry, MetricReport, METRIC_NAMES};
pub use xcorr::{cross_correlation, default_max_lag, ShiftScan};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("signals differ in length ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("signals are empty")]
    Empty,
    #[error("reference signal has zero range")]
    ZeroRange,
    #[error("reference signal has zero mean")]
    ZeroMean,
    #[error("{0} signal has zero variance")]
    ZeroVariance(&'static str),
    #[error("{0} signal has zero energy")]
    ZeroEnergy(&'static str),
    #[error("max lag {max_lag} out of range for {n} samples")]
    LagOutOfRange { max_lag: usize, n: usize },
    #[error("invalid combination weights: {0}")]
    InvalidWeights(String),
    #[error("invalid corridor: inner {inner}, outer {outer}")]
    InvalidCorridor { inner: f64, outer: f64 },
    #[error("corridor is degenerate: reference amplitude is zero")]
    DegenerateCorridor,
}

pub type Result<T> = std::result::Result<T, MetricError>;

pub(crate) fn check_lengths(x: &[f64], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(x.len())
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance.
pub(crate) fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
}
