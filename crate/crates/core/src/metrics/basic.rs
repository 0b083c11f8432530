//! Point-wise error measures and regression-style scores.

use serde::{Deserialize, Serialize};

use super::{check_lengths, mean, variance, MetricError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalizer {
    /// Divide by `max(y) - min(y)`.
    #[default]
    Range,
    /// Divide by `mean(y)`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicErrors {
    pub mae: f64,
    pub mse: f64,
    pub medae: f64,
    pub maxae: f64,
    pub r2: f64,
    pub frac_explained_abs: f64,
    pub explained_variance: f64,
    pub pearson: f64,
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn abs_errors(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).collect()
}

pub fn mse(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = check_lengths(x, y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64)
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    mse(x, y).map(f64::sqrt)
}

pub fn nrmse(x: &[f64], y: &[f64], normalizer: Normalizer) -> Result<f64> {
    let value = rmse(x, y)?;
    match normalizer {
        Normalizer::Range => {
            let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = y.iter().copied().fold(f64::INFINITY, f64::min);
            if max <= min {
                return Err(MetricError::ZeroRange);
            }
            Ok(value / (max - min))
        }
        Normalizer::Mean => {
            let m = mean(y);
            if m == 0.0 {
                return Err(MetricError::ZeroMean);
            }
            Ok(value / m)
        }
    }
}

pub fn mae(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = check_lengths(x, y)?;
    Ok(abs_errors(x, y).iter().sum::<f64>() / n as f64)
}

pub fn medae(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let mut e = abs_errors(x, y);
    e.sort_by(f64::total_cmp);
    let mid = e.len() / 2;
    Ok(if e.len() % 2 == 1 {
        e[mid]
    } else {
        0.5 * (e[mid - 1] + e[mid])
    })
}

pub fn maxae(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    Ok(abs_errors(x, y).into_iter().fold(0.0, f64::max))
}

/// Coefficient of determination of `x` as a predictor of `y`.
pub fn r2(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if is_constant(y) {
        return Err(MetricError::ZeroVariance("reference"));
    }
    let my = mean(y);
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `1 - Σ|y - x| / Σ|y - mean(y)|`
pub fn frac_explained_abs(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if is_constant(y) {
        return Err(MetricError::ZeroVariance("reference"));
    }
    let my = mean(y);
    let num: f64 = abs_errors(x, y).iter().sum();
    let den: f64 = y.iter().map(|b| (b - my).abs()).sum();
    Ok(1.0 - num / den)
}

/// `1 - Var(y - x) / Var(y)`
pub fn explained_variance(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if is_constant(y) {
        return Err(MetricError::ZeroVariance("reference"));
    }
    let resid: Vec<f64> = y.iter().zip(x).map(|(b, a)| b - a).collect();
    Ok(1.0 - variance(&resid) / variance(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    if is_constant(y) {
        return Err(MetricError::ZeroVariance("reference"));
    }
    if is_constant(x) {
        return Err(MetricError::ZeroVariance("test"));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn basic_errors(x: &[f64], y: &[f64]) -> Result<BasicErrors> {
    Ok(BasicErrors {
        mae: mae(x, y)?,
        mse: mse(x, y)?,
        medae: medae(x, y)?,
        maxae: maxae(x, y)?,
        r2: r2(x, y)?,
        frac_explained_abs: frac_explained_abs(x, y)?,
        explained_variance: explained_variance(x, y)?,
        pearson: pearson(x, y)?,
    })
}
