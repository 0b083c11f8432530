//! Sensitivity studies: sweep one hyperparameter, refit over repeated random
//! splits, report mean and variance of the test score per value.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{io_err, write_json, DatasetError};
use crate::features::{compute_features, FeatureError, FeatureMatrix};
use crate::pipeline::{fit_and_score, PipelineConfig, PipelineError};
use crate::seeds::derive;
use crate::universe::{build_dataset, UniverseConfig, UniverseError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study: {0}")]
    Invalid(String),
    #[error("{parameter} = {value}, repeat {repeat}: {source}")]
    Repeat {
        parameter: String,
        value: f64,
        repeat: usize,
        #[source]
        source: PipelineError,
    },
    #[error(transparent)]
    Universe(#[from] UniverseError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, StudyError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    /// Population variance over repeats.
    pub variance: f64,
    pub scores: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl ScoreStats {
    pub fn from_scores(scores: Vec<f64>, seeds: Vec<u64>) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let variance = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            variance,
            scores,
            seeds,
        }
    }
}

/// Repeat split/fit/score with one derived seed per repeat.
pub fn repeated_score(
    fm: &FeatureMatrix,
    config: &PipelineConfig,
    repeats: usize,
    seed: u64,
) -> std::result::Result<ScoreStats, (usize, PipelineError)> {
    assert!(repeats >= 1, "repeats must be >= 1");
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| derive(seed, &[r])).collect();
    let scores = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &s)| fit_and_score(fm, config, s).map(|f| f.score).map_err(|e| (r, e)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ScoreStats::from_scores(scores, seeds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyParameter {
    MeasurementNoise,
    /// Simulations per experiment; must be a perfect square `k²`, giving a
    /// `k×k` gain/damping grid.
    NSimulations,
    NExperts,
    SigmaExp,
    CorrThreshold,
}

impl StudyParameter {
    pub fn all() -> [StudyParameter; 5] {
        use StudyParameter::*;
        [MeasurementNoise, NSimulations, NExperts, SigmaExp, CorrThreshold]
    }

    pub fn name(self) -> &'static str {
        match self {
            StudyParameter::MeasurementNoise => "measurement_noise",
            StudyParameter::NSimulations => "n_simulations",
            StudyParameter::NExperts => "n_experts",
            StudyParameter::SigmaExp => "sigma_exp",
            StudyParameter::CorrThreshold => "corr_threshold",
        }
    }

    pub fn figure(self) -> u8 {
        match self {
            StudyParameter::MeasurementNoise => 7,
            StudyParameter::NSimulations => 8,
            StudyParameter::NExperts => 9,
            StudyParameter::SigmaExp => 10,
            StudyParameter::CorrThreshold => 11,
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            StudyParameter::MeasurementNoise => vec![0.0025, 0.005, 0.01, 0.02, 0.04],
            StudyParameter::NSimulations => vec![4.0, 9.0, 16.0, 25.0],
            StudyParameter::NExperts => vec![2.0, 5.0, 10.0, 15.0],
            StudyParameter::SigmaExp => vec![0.01, 0.05, 0.1, 0.2],
            StudyParameter::CorrThreshold => vec![0.8, 0.9, 0.99],
        }
    }

    /// Apply `value` to copies of the base configs.
    pub fn apply(
        self,
        value: f64,
        universe: &UniverseConfig,
        pipeline: &PipelineConfig,
    ) -> Result<(UniverseConfig, PipelineConfig)> {
        let (mut u, mut p) = (universe.clone(), pipeline.clone());
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(StudyError::Invalid(format!("{} must be a positive integer, got {v}", self.name())))
            }
        };
        match self {
            StudyParameter::MeasurementNoise => u.sigma_measurement = value,
            StudyParameter::SigmaExp => u.sigma_exp = value,
            StudyParameter::NExperts => u.n_experts = count(value)?,
            StudyParameter::NSimulations => {
                let n = count(value)?;
                let k = (n as f64).sqrt().round() as usize;
                if k * k != n || k < 2 {
                    return Err(StudyError::Invalid(format!(
                        "n_simulations must be a square k² with k >= 2, got {n}"
                    )));
                }
                u = u.with_grid_size(k);
            }
            StudyParameter::CorrThreshold => p.corr_threshold = value,
        }
        u.validate()?;
        p.validate()?;
        Ok((u, p))
    }
}

impl std::fmt::Display for StudyParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPoint {
    pub value: f64,
    pub repeats: usize,
    #[serde(flatten)]
    pub stats: ScoreStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub parameter: StudyParameter,
    pub seed: u64,
    pub points: Vec<StudyPoint>,
}

impl StudyResult {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn point(&self, value: f64) -> Option<&StudyPoint> {
        self.points.iter().find(|p| p.value == value)
    }

    /// Long format: `parameter,value,repeat,score`.
    pub fn write_tidy_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["parameter", "value", "repeat", "score"])?;
        for p in &self.points {
            for (r, s) in p.stats.scores.iter().enumerate() {
                w.write_record([self.parameter.name(), &p.value.to_string(), &r.to_string(), &s.to_string()])?;
            }
        }
        w.flush().map_err(io_err(path))?;
        Ok(())
    }

    /// One row per swept value: `parameter,value,mean_score,score_variance,repeats`.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["parameter", "value", "mean_score", "score_variance", "repeats"])?;
        for p in &self.points {
            w.write_record([
                self.parameter.name(),
                &p.value.to_string(),
                &p.stats.mean.to_string(),
                &p.stats.variance.to_string(),
                &p.repeats.to_string(),
            ])?;
        }
        w.flush().map_err(io_err(path))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub universe: UniverseConfig,
    pub pipeline: PipelineConfig,
    pub repeats: usize,
    /// Parameters to sweep, with their values; empty means all five with
    /// default grids.
    pub sweeps: Vec<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: StudyParameter,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            universe: UniverseConfig::default(),
            pipeline: PipelineConfig::default(),
            repeats: 50,
            sweeps: Vec::new(),
        }
    }
}

impl StudyConfig {
    pub fn resolved_sweeps(&self) -> Vec<(StudyParameter, Vec<f64>)> {
        if self.sweeps.is_empty() {
            return StudyParameter::all().iter().map(|p| (*p, p.default_values())).collect();
        }
        self.sweeps
            .iter()
            .map(|s| (s.parameter, s.values.clone().unwrap_or_else(|| s.parameter.default_values())))
            .collect()
    }
}

/// Regenerate the universe per value (same universe seed throughout, so only
/// the swept parameter changes) and score it over `repeats` splits. Split
/// seeds are derived from `(seed, value index, repeat)`.
pub fn sweep(
    parameter: StudyParameter,
    values: &[f64],
    base: &StudyConfig,
    seed: u64,
) -> Result<StudyResult> {
    if values.is_empty() {
        return Err(StudyError::Invalid(format!("no values for {parameter}")));
    }
    if base.repeats == 0 {
        return Err(StudyError::Invalid("repeats must be >= 1".into()));
    }
    let universe_base = UniverseConfig {
        seed,
        ..base.universe.clone()
    };
    let configs = values
        .iter()
        .map(|&v| parameter.apply(v, &universe_base, &base.pipeline))
        .collect::<Result<Vec<_>>>()?;

    let mut points = Vec::with_capacity(values.len());
    let mut cached: Option<(UniverseConfig, FeatureMatrix)> = None;
    for (i, (&value, (u, p))) in values.iter().zip(&configs).enumerate() {
        let fm = match &cached {
            Some((cu, fm)) if *cu == *u && p.metrics == base.pipeline.metrics => fm.clone(),
            _ => {
                let universe = build_dataset(u)?;
                let fm = compute_features(&universe.dataset, &p.metrics)?;
                cached = Some((u.clone(), fm.clone()));
                fm
            }
        };
        let stats = repeated_score(&fm, p, base.repeats, derive(seed, &[0x57d, i as u64])).map_err(
            |(repeat, source)| StudyError::Repeat {
                parameter: parameter.name().into(),
                value,
                repeat,
                source,
            },
        )?;
        log::info!(
            "{parameter} = {value}: mean {:.4}, variance {:.3e}",
            stats.mean,
            stats.variance
        );
        points.push(StudyPoint {
            value,
            repeats: base.repeats,
            stats,
        });
    }
    Ok(StudyResult {
        parameter,
        seed,
        points,
    })
}

/// Outcome of checking one qualitative trend on a study result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub figure: u8,
    pub parameter: StudyParameter,
    pub claim: String,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
}

/// Evaluate the expected trend for the swept parameter. Returns `None` when
/// the values needed for the check were not swept.
pub fn check_trend(result: &StudyResult) -> Option<TrendCheck> {
    let mean = |v: f64| result.point(v).map(|p| p.stats.mean);
    let (claim, tolerance, observed, passed) = match result.parameter {
        StudyParameter::MeasurementNoise => {
            let d = (mean(0.04)? - mean(0.0025)?).abs();
            ("|mean(0.04) - mean(0.0025)| < tol", 0.1, d, d < 0.1)
        }
        StudyParameter::NSimulations => {
            let first = result.points.first()?;
            let last = result.points.last()?;
            let diff = first.stats.variance - last.stats.variance;
            ("variance at smallest grid >= variance at largest", 0.0, diff, diff >= 0.0)
        }
        StudyParameter::NExperts => {
            let d = (mean(2.0)? - mean(15.0)?).abs();
            ("|mean(2 experts) - mean(15 experts)| < tol", 0.1, d, d < 0.1)
        }
        StudyParameter::SigmaExp => {
            let worst = result
                .points
                .windows(2)
                .map(|w| w[1].stats.mean - w[0].stats.mean)
                .fold(f64::NEG_INFINITY, f64::max);
            ("mean score non-increasing, largest step increase <= tol", 0.02, worst, worst <= 0.02)
        }
        StudyParameter::CorrThreshold => {
            let means: Vec<f64> = result.points.iter().map(|p| p.stats.mean).collect();
            let spread = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - means.iter().cloned().fold(f64::INFINITY, f64::min);
            ("spread of mean scores < tol", 0.1, spread, spread < 0.1)
        }
    };
    Some(TrendCheck {
        figure: result.parameter.figure(),
        parameter: result.parameter,
        claim: claim.into(),
        tolerance,
        observed,
        passed,
    })
}

/// Write `figN.csv`, `figN_scores.csv` and `figN.json` per result plus
/// `trends.json` into `dir`.
pub fn write_report(results: &[StudyResult], dir: &Path) -> Result<Vec<TrendCheck>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut checks = Vec::new();
    for r in results {
        let fig = r.parameter.figure();
        r.write_summary_csv(&dir.join(format!("fig{fig}.csv")))?;
        r.write_tidy_csv(&dir.join(format!("fig{fig}_scores.csv")))?;
        write_json(&dir.join(format!("fig{fig}.json")), r)?;
        checks.extend(check_trend(r));
    }
    write_json(&dir.join("trends.json"), &checks)?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_matrix(noise: bool) -> FeatureMatrix {
        let n = 40;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let a = (i as f64 * 0.37).sin() * 0.5 + 0.5;
                let b = (i as f64 * 1.21).cos() * 0.5 + 0.5;
                vec![a, b]
            })
            .collect();
        let labels = rows
            .iter()
            .enumerate()
            .map(|(i, r)| 0.5 * r[0] + 0.3 * r[1] + if noise { 0.05 * ((i * 7 % 11) as f64 / 11.0) } else { 0.0 })
            .collect();
        FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            (0..n).map(|i| format!("p{i}")).collect(),
            vec!["e".into(); n],
            rows,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn exact_linear_labels_score_one() {
        let s = repeated_score(&linear_matrix(false), &PipelineConfig::default(), 10, 1).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-9);
        assert!(s.variance < 1e-18);
    }

    #[test]
    fn single_repeat_has_zero_variance() {
        let s = repeated_score(&linear_matrix(true), &PipelineConfig::default(), 1, 2).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.scores.len(), 1);
    }

    #[test]
    fn deterministic() {
        let fm = linear_matrix(true);
        let a = repeated_score(&fm, &PipelineConfig::default(), 8, 3).unwrap();
        let b = repeated_score(&fm, &PipelineConfig::default(), 8, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parameter_values_validated() {
        let (u, p) = (UniverseConfig::default(), PipelineConfig::default());
        assert!(StudyParameter::NSimulations.apply(10.0, &u, &p).is_err());
        assert!(StudyParameter::NSimulations.apply(1.0, &u, &p).is_err());
        let (u9, _) = StudyParameter::NSimulations.apply(9.0, &u, &p).unwrap();
        assert_eq!(u9.n_simulations(), 9);
        assert!(StudyParameter::NExperts.apply(2.5, &u, &p).is_err());
        assert!(StudyParameter::SigmaExp.apply(-0.1, &u, &p).is_err());
        assert!(StudyParameter::CorrThreshold.apply(1.5, &u, &p).is_err());
    }

    #[test]
    fn small_sweep_round_trips() {
        let base = StudyConfig {
            universe: UniverseConfig {
                p0_values: vec![0.0, 1.5],
                t_delay_values: vec![0.0],
                ..Default::default()
            },
            repeats: 3,
            ..Default::default()
        };
        let r = sweep(StudyParameter::CorrThreshold, &[0.8, 0.99], &base, 5).unwrap();
        assert_eq!(r.points.len(), 2);
        assert!(r.points.iter().all(|p| p.stats.scores.len() == 3));
        assert_eq!(sweep(StudyParameter::CorrThreshold, &[0.8, 0.99], &base, 5).unwrap(), r);

        let dir = tempfile::tempdir().unwrap();
        let checks = write_report(std::slice::from_ref(&r), dir.path()).unwrap();
        assert_eq!(checks.len(), 1);
        let text = std::fs::read_to_string(dir.path().join("fig11_scores.csv")).unwrap();
        assert!(text.starts_with("parameter,value,repeat,score\n"));
        assert_eq!(text.lines().count(), 7);
        let json = std::fs::read_to_string(dir.path().join("fig11.json")).unwrap();
        assert_eq!(serde_json::from_str::<StudyResult>(&json).unwrap(), r);
    }
}
