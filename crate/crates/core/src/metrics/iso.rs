//! Simplified ISO 18571-style objective rating.
//!
//! Sub-scores on `[0, 1]`, higher is better:
//! * corridor `z`: per-sample score 1 inside `±inner·A`, 0 outside `±outer·A`,
//!   linear in between, averaged; `A = max|y|`.
//! * phase `p = 1 - min(1, |n*| / max_lag)`.
//! * magnitude `m = 1 - min(1, e_M)` with `e_M` the relative L1 error after the
//!   global shift and DTW warping.
//! * slope `s`, same as `m` on first differences.
//!
//! The overall rating is `0.4 z + 0.2 p + 0.2 m + 0.2 s`. This is not a
//! certified implementation of the standard.

use serde::{Deserialize, Serialize};

use super::eearth::{warped_errors, WarpedErrors};
use super::{check_lengths, cross_correlation, MetricError, Result, ShiftScan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorBounds {
    pub inner: f64,
    pub outer: f64,
}

impl Default for CorridorBounds {
    fn default() -> Self {
        Self {
            inner: 0.05,
            outer: 0.5,
        }
    }
}

impl CorridorBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner > 0.0 && self.inner < self.outer && self.outer.is_finite()) {
            return Err(MetricError::InvalidCorridor {
                inner: self.inner,
                outer: self.outer,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iso18571Scores {
    pub z: f64,
    pub p: f64,
    pub m: f64,
    pub s: f64,
    pub r: f64,
}

pub fn iso_rating(z: f64, p: f64, m: f64, s: f64) -> f64 {
    0.4 * z + 0.2 * p + 0.2 * m + 0.2 * s
}

pub fn corridor_score(x: &[f64], y: &[f64], bounds: &CorridorBounds) -> Result<f64> {
    let n = check_lengths(x, y)?;
    bounds.validate()?;
    let amplitude = y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if amplitude == 0.0 {
        return Err(MetricError::DegenerateCorridor);
    }
    let inner = bounds.inner * amplitude;
    let outer = bounds.outer * amplitude;
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = (a - b).abs();
            if e <= inner {
                1.0
            } else if e >= outer {
                0.0
            } else {
                (outer - e) / (outer - inner)
            }
        })
        .sum();
    Ok(total / n as f64)
}

pub(crate) fn iso_from(z: f64, scan: &ShiftScan, errors: &WarpedErrors) -> Iso18571Scores {
    let max_lag = scan.max_lag();
    let p = if max_lag == 0 {
        1.0
    } else {
        1.0 - (scan.n_star.unsigned_abs() as f64 / max_lag as f64).min(1.0)
    };
    let m = 1.0 - errors.magnitude.min(1.0);
    let s = 1.0 - errors.slope.min(1.0);
    Iso18571Scores {
        z,
        p,
        m,
        s,
        r: iso_rating(z, p, m, s),
    }
}

pub fn iso18571_scores(
    x: &[f64],
    y: &[f64],
    bounds: &CorridorBounds,
    max_lag: usize,
    window: usize,
) -> Result<Iso18571Scores> {
    let z = corridor_score(x, y, bounds)?;
    let scan = cross_correlation(x, y, max_lag)?;
    let errors = warped_errors(x, y, &scan, window)?;
    Ok(iso_from(z, &scan, &errors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn signal() -> Vec<f64> {
        (0..120).map(|i| (i as f64 * 0.08).sin() * (1.0 + i as f64 / 100.0)).collect()
    }

    #[test]
    fn identical_is_perfect() {
        let y = signal();
        let s = iso18571_scores(&y, &y, &CorridorBounds::default(), 12, 12).unwrap();
        assert_eq!((s.z, s.p, s.m, s.s), (1.0, 1.0, 1.0, 1.0));
        assert_abs_diff_eq!(s.r, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn weights() {
        assert_abs_diff_eq!(iso_rating(1.0, 0.0, 0.0, 0.0), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(iso_rating(0.0, 1.0, 1.0, 1.0), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn corridor_midpoint_and_outside() {
        let y = signal();
        let b = CorridorBounds::default();
        let a = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // e halfway between inner and outer -> (outer - e)/(outer - inner) = 1/2
        let x: Vec<f64> = y.iter().map(|v| v + 0.5 * (b.inner + b.outer) * a).collect();
        assert_abs_diff_eq!(corridor_score(&x, &y, &b).unwrap(), 0.5, epsilon = 1e-12);
        let far: Vec<f64> = y.iter().map(|v| v + 2.0 * b.outer * a).collect();
        assert_eq!(corridor_score(&far, &y, &b).unwrap(), 0.0);
        assert_eq!(corridor_score(&y, &y, &b).unwrap(), 1.0);
        let s = iso18571_scores(&far, &y, &b, 12, 12).unwrap();
        assert_eq!(s.z, 0.0);
    }

    #[test]
    fn corridor_errors() {
        let y = signal();
        let bad = CorridorBounds { inner: 0.5, outer: 0.1 };
        assert!(matches!(corridor_score(&y, &y, &bad), Err(MetricError::InvalidCorridor { .. })));
        let zero = vec![0.0; y.len()];
        assert_eq!(
            corridor_score(&y, &zero, &CorridorBounds::default()),
            Err(MetricError::DegenerateCorridor)
        );
    }

    #[test]
    fn scores_in_unit_interval() {
        let y = signal();
        let x: Vec<f64> = y.iter().enumerate().map(|(i, v)| 0.7 * v + 0.01 * (i % 5) as f64).collect();
        let s = iso18571_scores(&x, &y, &CorridorBounds::default(), 12, 6).unwrap();
        for v in [s.z, s.p, s.m, s.s, s.r] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_abs_diff_eq!(s.r, 0.4 * s.z + 0.2 * (s.p + s.m + s.s), epsilon = 1e-12);
    }
}
