//! The custom metric: a linear model from base-metric features to an expert
//! rating, with prediction intervals.
//!
//! Features are standardized with the training mean and population standard
//! deviation before fitting; an intercept column is always present. Weights
//! are stored in standardized units (`weights[0]` is the intercept), see
//! [`CustomMetricModel::raw_weights`] for the original feature units.

mod lasso;
mod ols;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::grade::{Grade, GradeTable};
use crate::metrics::MetricReport;
use crate::stats::{normal_quantile, student_t_quantile};

pub use lasso::{fit_lasso, lambda_max, LassoOptions, LassoPenalty};
pub use ols::fit_ols;

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("need more than {needed} rows to fit, have {n}")]
    TooFewRows { n: usize, needed: usize },
    #[error("feature `{0}` not provided")]
    MissingFeature(String),
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("invalid lasso penalty: {0}")]
    InvalidPenalty(String),
    #[error("coordinate descent did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("test set is empty")]
    EmptyTest,
    #[error("test labels have zero variance")]
    ZeroLabelVariance,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RegressError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1.0 for constant columns.
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(rows: &[Vec<f64>], p: usize) -> Self {
        let n = rows.len() as f64;
        let mut mean = vec![0.0; p];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; p];
        for r in rows {
            for j in 0..p {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, j: usize, v: f64) -> f64 {
        (v - self.mean[j]) / self.scale[j]
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            mean: idx.iter().map(|&j| self.mean[j]).collect(),
            scale: idx.iter().map(|&j| self.scale[j]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FitStrategy {
    Ols,
    Lasso { lambda: f64, cross_validated: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomMetricModel {
    feature_names: Vec<String>,
    /// Intercept first, then one weight per feature (standardized units).
    weights: Vec<f64>,
    sigma_train: f64,
    n: usize,
    p: usize,
    /// `(p+1)×(p+1)` row-major inverse Gram matrix of the standardized design
    /// with intercept column (pseudo-inverse if rank deficient).
    xtx_inv: Vec<f64>,
    standardization: Standardization,
    strategy: FitStrategy,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub simple_lo: f64,
    pub simple_hi: f64,
    pub full_lo: f64,
    pub full_hi: f64,
    pub alpha: f64,
}

impl PredictionInterval {
    pub fn simple_half_width(&self) -> f64 {
        0.5 * (self.simple_hi - self.simple_lo)
    }

    pub fn full_half_width(&self) -> f64 {
        0.5 * (self.full_hi - self.full_lo)
    }

    /// The center clamped to `[0, 1]`.
    pub fn rating(&self) -> f64 {
        self.center.clamp(0.0, 1.0)
    }

    pub fn grade(&self, table: &GradeTable) -> Grade {
        table.grade(self.rating()).expect("clamped rating is in range")
    }
}

impl CustomMetricModel {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        feature_names: Vec<String>,
        weights: Vec<f64>,
        sigma_train: f64,
        n: usize,
        xtx_inv: Vec<f64>,
        standardization: Standardization,
        strategy: FitStrategy,
        warnings: Vec<String>,
    ) -> Self {
        let p = feature_names.len();
        Self {
            feature_names,
            weights,
            sigma_train,
            n,
            p,
            xtx_inv,
            standardization,
            strategy,
            seed: None,
            warnings,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.weights[0]
    }

    pub fn sigma_train(&self) -> f64 {
        self.sigma_train
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn xtx_inv(&self) -> &[f64] {
        &self.xtx_inv
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn strategy(&self) -> FitStrategy {
        self.strategy
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Intercept and weights in original feature units.
    pub fn raw_weights(&self) -> (f64, Vec<f64>) {
        let s = &self.standardization;
        let w: Vec<f64> = (0..self.p).map(|j| self.weights[j + 1] / s.scale[j]).collect();
        let b = self.weights[0] - (0..self.p).map(|j| w[j] * s.mean[j]).sum::<f64>();
        (b, w)
    }

    /// Standard errors of the feature weights in original units.
    pub fn standard_errors(&self) -> Vec<f64> {
        let k = self.p + 1;
        (0..self.p)
            .map(|j| {
                let g = self.xtx_inv[(j + 1) * k + j + 1].max(0.0);
                self.sigma_train * g.sqrt() / self.standardization.scale[j]
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let k = self.p + 1;
        let bad = |m: &str| Err(RegressError::InvalidModel(m.into()));
        if self.p != self.feature_names.len() || self.weights.len() != k {
            return bad("weights and feature names disagree");
        }
        if self.xtx_inv.len() != k * k {
            return bad("xtx_inv has wrong size");
        }
        if self.standardization.mean.len() != self.p || self.standardization.scale.len() != self.p {
            return bad("standardization has wrong size");
        }
        if !(self.sigma_train >= 0.0) || self.n <= k {
            return bad("sigma_train or n out of range");
        }
        for i in 0..k {
            for j in 0..i {
                let (a, b) = (self.xtx_inv[i * k + j], self.xtx_inv[j * k + i]);
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                    return bad("xtx_inv not symmetric");
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| RegressError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| RegressError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Predict from a feature lookup by name.
    pub fn predict_with(&self, lookup: impl Fn(&str) -> Option<f64>, alpha: f64) -> Result<PredictionInterval> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(RegressError::InvalidAlpha(alpha));
        }
        let k = self.p + 1;
        let mut x = Vec::with_capacity(k);
        x.push(1.0);
        for (j, name) in self.feature_names.iter().enumerate() {
            let v = lookup(name).ok_or_else(|| RegressError::MissingFeature(name.clone()))?;
            x.push(self.standardization.apply(j, v));
        }
        let center: f64 = x.iter().zip(&self.weights).map(|(a, b)| a * b).sum();

        let mut quad = 0.0;
        for i in 0..k {
            let row = &self.xtx_inv[i * k..(i + 1) * k];
            quad += x[i] * row.iter().zip(&x).map(|(g, v)| g * v).sum::<f64>();
        }
        let n = self.n as f64;
        let q = 1.0 - alpha / 2.0;
        let t_simple = if self.n > 30 {
            normal_quantile(q)
        } else {
            student_t_quantile(q, n - 2.0)
        };
        // df n-p-1, but never above the simple interval's n-2
        let df_full = (self.n - self.p.max(1) - 1) as f64;
        let t_full = student_t_quantile(q, df_full);
        let simple = self.sigma_train * t_simple;
        let full = (self.sigma_train.powi(2) * (1.0 + quad.max(0.0))).sqrt() * t_full;
        Ok(PredictionInterval {
            center,
            simple_lo: center - simple,
            simple_hi: center + simple,
            full_lo: center - full,
            full_hi: center + full,
            alpha,
        })
    }

    pub fn predict(&self, features: &BTreeMap<String, f64>, alpha: f64) -> Result<PredictionInterval> {
        self.predict_with(|name| features.get(name).copied(), alpha)
    }

    pub fn predict_report(&self, report: &MetricReport, alpha: f64) -> Result<PredictionInterval> {
        self.predict_with(|name| report.value(name), alpha)
    }

    /// Point predictions for every row of a feature matrix.
    pub fn predict_matrix(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        let idx = column_indices(fm, &self.feature_names)?;
        Ok(fm
            .rows()
            .iter()
            .map(|r| {
                self.weights[0]
                    + idx
                        .iter()
                        .enumerate()
                        .map(|(j, &c)| self.weights[j + 1] * self.standardization.apply(j, r[c]))
                        .sum::<f64>()
            })
            .collect())
    }

    pub fn predict_row(&self, fm: &FeatureMatrix, row: usize, alpha: f64) -> Result<PredictionInterval> {
        let names = fm.feature_names();
        let r = &fm.rows()[row];
        self.predict_with(|name| names.iter().position(|n| n == name).map(|c| r[c]), alpha)
    }
}

pub(crate) fn column_indices(fm: &FeatureMatrix, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            fm.feature_names()
                .iter()
                .position(|f| f == n)
                .ok_or_else(|| RegressError::MissingFeature(n.clone()))
        })
        .collect()
}

/// Coefficient of determination on held-out rows.
pub fn score(model: &CustomMetricModel, test: &FeatureMatrix) -> Result<f64> {
    if test.n_rows() == 0 {
        return Err(RegressError::EmptyTest);
    }
    r_squared(test.labels(), &model.predict_matrix(test)?)
}

pub fn r_squared(labels: &[f64], predictions: &[f64]) -> Result<f64> {
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    let tss: f64 = labels.iter().map(|y| (y - mean).powi(2)).sum();
    if tss == 0.0 {
        return Err(RegressError::ZeroLabelVariance);
    }
    let rss: f64 = labels.iter().zip(predictions).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - rss / tss)
}
