//! One pass of the custom-metric design loop on a feature matrix: split by
//! pair, prune correlated features on the training side, fit, score.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{split, uncorrelated_features, FeatureError, FeatureMatrix};
use crate::metrics::MetricConfig;
use crate::regress::{fit_lasso, fit_ols, score, CustomMetricModel, LassoOptions, LassoPenalty, RegressError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FitMethod {
    #[default]
    Ols,
    Lasso {
        #[serde(default)]
        penalty: LassoPenalty,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub metrics: MetricConfig,
    pub train_fraction: f64,
    pub corr_threshold: f64,
    pub fit: FitMethod,
    pub lasso: LassoOptions,
    /// Significance level of reported prediction intervals.
    pub alpha: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            metrics: MetricConfig::default(),
            train_fraction: 0.8,
            corr_threshold: 0.9,
            fit: FitMethod::Ols,
            lasso: LassoOptions::default(),
            alpha: 0.05,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.corr_threshold > 0.0 && self.corr_threshold <= 1.0) {
            return bad(format!("corr_threshold {} outside (0, 1]", self.corr_threshold));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        self.metrics
            .corridor
            .validate()
            .and_then(|_| self.metrics.eearth_weights.validate())
            .or_else(|e| bad(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: CustomMetricModel,
    pub score: f64,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
}

pub fn fit_model(train: &FeatureMatrix, config: &PipelineConfig, seed: u64) -> Result<CustomMetricModel> {
    Ok(match config.fit {
        FitMethod::Ols => fit_ols(train)?.with_seed(seed),
        FitMethod::Lasso { penalty } => fit_lasso(train, penalty, seed, &config.lasso)?,
    })
}

pub fn fit_and_score(fm: &FeatureMatrix, config: &PipelineConfig, seed: u64) -> Result<Fitted> {
    let (train, test) = split(fm, config.train_fraction, seed)?;
    let keep = uncorrelated_features(&train, config.corr_threshold)?;
    let train = train.select_features(&keep)?;
    let model = fit_model(&train, config, seed)?;
    let score = score(&model, &test)?;
    Ok(Fitted {
        model,
        score,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"corr_threshold": 0.8}"#).unwrap();
        assert_eq!(c.corr_threshold, 0.8);
        assert_eq!(c.fit, FitMethod::Ols);
        let l: PipelineConfig = serde_json::from_str(r#"{"fit": {"method": "lasso"}}"#).unwrap();
        assert!(matches!(l.fit, FitMethod::Lasso { .. }));
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = PipelineConfig {
            train_fraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
