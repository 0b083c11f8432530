//! EEARTH-style combined score: phase, magnitude and slope errors on a
//! 0-10 scale, combined as `10 - (w1 P + w2 M + w3 S)`.
//!
//! * `P = 10 (1 - rho(n*)) / 2` from the normalized cross-correlation peak.
//! * `M = 10 min(1, Σ|x̃ - ỹ| / Σ|ỹ|)` along the DTW path of the signals after
//!   the global shift by `n*`.
//! * `S` is `M` computed on first differences.

use serde::{Deserialize, Serialize};

use super::{cross_correlation, dtw_align, MetricError, Result, ShiftScan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EearthWeights {
    pub phase: f64,
    pub magnitude: f64,
    pub slope: f64,
}

impl Default for EearthWeights {
    fn default() -> Self {
        Self {
            phase: 0.4,
            magnitude: 0.4,
            slope: 0.2,
        }
    }
}

impl EearthWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.phase, self.magnitude, self.slope];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricError::InvalidWeights(format!("{w:?} must be non-negative")));
        }
        if w.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(MetricError::InvalidWeights(format!("{w:?} sum above 1")));
        }
        Ok(())
    }
}

/// Score on `[0, 10]` plus its components, each on `[0, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eearth {
    pub score: f64,
    pub phase: f64,
    pub magnitude: f64,
    pub slope: f64,
}

pub fn combine_eearth(weights: &EearthWeights, phase: f64, magnitude: f64, slope: f64) -> f64 {
    10.0 - (weights.phase * phase + weights.magnitude * magnitude + weights.slope * slope)
}

/// Relative L1 errors after global shift and local warping. Unclamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct WarpedErrors {
    pub magnitude: f64,
    pub slope: f64,
}

/// Overlapping parts of `x[i]` and `y[i + lag]`.
pub(crate) fn shifted_overlap<'a>(x: &'a [f64], y: &'a [f64], lag: i64) -> (&'a [f64], &'a [f64]) {
    let n = x.len();
    let l = lag.unsigned_abs() as usize;
    if lag >= 0 {
        (&x[..n - l], &y[l..])
    } else {
        (&x[l..], &y[..n - l])
    }
}

fn relative_warped_l1(a: &[f64], b: &[f64], window: usize) -> Result<f64> {
    let al = dtw_align(a, b, window)?;
    let den: f64 = al.path.iter().map(|&(_, j)| b[j].abs()).sum();
    if den == 0.0 {
        return Err(MetricError::ZeroEnergy("reference"));
    }
    Ok(al.cost / den)
}

fn first_differences(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

pub(crate) fn warped_errors(x: &[f64], y: &[f64], scan: &ShiftScan, window: usize) -> Result<WarpedErrors> {
    let (xs, ys) = shifted_overlap(x, y, scan.n_star);
    let magnitude = relative_warped_l1(xs, ys, window)?;
    if xs.len() < 2 {
        return Err(MetricError::Empty);
    }
    let slope = relative_warped_l1(&first_differences(xs), &first_differences(ys), window)?;
    Ok(WarpedErrors { magnitude, slope })
}

pub(crate) fn eearth_from(scan: &ShiftScan, errors: &WarpedErrors, weights: &EearthWeights) -> Result<Eearth> {
    weights.validate()?;
    let phase = 10.0 * (1.0 - scan.rho_star()) / 2.0;
    let magnitude = 10.0 * errors.magnitude.min(1.0);
    let slope = 10.0 * errors.slope.min(1.0);
    Ok(Eearth {
        score: combine_eearth(weights, phase, magnitude, slope),
        phase,
        magnitude,
        slope,
    })
}

pub fn eearth(x: &[f64], y: &[f64], weights: &EearthWeights, max_lag: usize, window: usize) -> Result<Eearth> {
    weights.validate()?;
    let scan = cross_correlation(x, y, max_lag)?;
    let errors = warped_errors(x, y, &scan, window)?;
    eearth_from(&scan, &errors, weights)
}
