//! Normalized cross-correlation over a window of integer lags.
//!
//! Lag `n` pairs `x[i]` with `y[i + n]`, so a reference that trails the test
//! signal by five samples peaks at `n = 5`. Samples outside the overlap are
//! treated as zero and the normalization uses the full-signal energies, which
//! keeps every `rho` inside `[-1, 1]`.

use serde::{Deserialize, Serialize};

use super::{check_lengths, psi_stats, MetricError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScan {
    /// Scanned lags in ascending order, `-max_lag..=max_lag`.
    pub lags: Vec<i64>,
    /// Mean cross products `ψXY(lag)`.
    pub cross: Vec<f64>,
    /// `ψXY(lag) / sqrt(ψXX ψYY)`.
    pub rho: Vec<f64>,
    pub n_star: i64,
}

impl ShiftScan {
    pub fn max_lag(&self) -> usize {
        (self.lags.len() - 1) / 2
    }

    fn index(&self, lag: i64) -> usize {
        (lag + self.max_lag() as i64) as usize
    }

    pub fn rho_at(&self, lag: i64) -> f64 {
        self.rho[self.index(lag)]
    }

    pub fn cross_at(&self, lag: i64) -> f64 {
        self.cross[self.index(lag)]
    }

    pub fn rho_star(&self) -> f64 {
        self.rho_at(self.n_star)
    }
}

/// Ten percent of the signal length.
pub fn default_max_lag(n: usize) -> usize {
    n / 10
}

fn lagged_cross(x: &[f64], y: &[f64], lag: i64) -> f64 {
    let n = x.len();
    let sum: f64 = if lag >= 0 {
        let l = lag as usize;
        x[..n - l].iter().zip(&y[l..]).map(|(a, b)| a * b).sum()
    } else {
        let l = (-lag) as usize;
        x[l..].iter().zip(&y[..n - l]).map(|(a, b)| a * b).sum()
    };
    sum / n as f64
}

/// Scan `-max_lag..=max_lag` and locate the lag of maximal correlation. Ties go
/// to the smallest `|lag|`, then to the positive lag.
pub fn cross_correlation(x: &[f64], y: &[f64], max_lag: usize) -> Result<ShiftScan> {
    let n = check_lengths(x, y)?;
    if max_lag >= n {
        return Err(MetricError::LagOutOfRange { max_lag, n });
    }
    let psi = psi_stats(x, y)?;
    if psi.psi_xx == 0.0 {
        return Err(MetricError::ZeroEnergy("test"));
    }
    if psi.psi_yy == 0.0 {
        return Err(MetricError::ZeroEnergy("reference"));
    }
    let norm = psi.energy_product().sqrt();

    let m = max_lag as i64;
    let lags: Vec<i64> = (-m..=m).collect();
    let cross: Vec<f64> = lags.iter().map(|&l| lagged_cross(x, y, l)).collect();
    let rho: Vec<f64> = cross.iter().map(|c| c / norm).collect();

    let mut n_star = 0i64;
    let mut best = rho[max_lag];
    for k in 1..=m {
        for lag in [k, -k] {
            let r = rho[(lag + m) as usize];
            if r > best {
                best = r;
                n_star = lag;
            }
        }
    }
    Ok(ShiftScan {
        lags,
        cross,
        rho,
        n_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force_best_lag(x: &[f64], y: &[f64], max_lag: i64) -> i64 {
        let n = x.len() as i64;
        let mut best = (f64::NEG_INFINITY, 0i64);
        for lag in -max_lag..=max_lag {
            let mut s = 0.0;
            for i in 0..n {
                let j = i + lag;
                if (0..n).contains(&j) {
                    s += x[i as usize] * y[j as usize];
                }
            }
            if s > best.0 + 1e-12 {
                best = (s, lag);
            }
        }
        best.1
    }

    #[test]
    fn identical_signals_peak_at_zero() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin() + 0.2).collect();
        let scan = cross_correlation(&x, &x, 5).unwrap();
        assert_eq!(scan.n_star, 0);
        assert!((scan.rho_at(0) - 1.0).abs() < 1e-12);
        assert_eq!(scan.lags.len(), 11);
    }

    #[test]
    fn delayed_reference() {
        let x: Vec<f64> = (0..64)
            .map(|i| (-((i as f64 - 20.0) / 4.0).powi(2)).exp())
            .collect();
        let mut y = vec![0.0; 64];
        y[5..].copy_from_slice(&x[..59]);
        let scan = cross_correlation(&x, &y, 10).unwrap();
        assert_eq!(brute_force_best_lag(&x, &y, 10), 5);
        assert_eq!(scan.n_star, 5);
    }

    #[test]
    fn negated_sine() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        let scan = cross_correlation(&x, &y, 3).unwrap();
        assert!((scan.rho_at(0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lag_range_checked() {
        assert_eq!(
            cross_correlation(&[1.0, 2.0], &[1.0, 2.0], 2),
            Err(MetricError::LagOutOfRange { max_lag: 2, n: 2 })
        );
        assert_eq!(
            cross_correlation(&[0.0, 0.0], &[1.0, 2.0], 1),
            Err(MetricError::ZeroEnergy("test"))
        );
    }

    proptest! {
        #[test]
        fn rho_bounded_and_peak_is_max(
            x in prop::collection::vec(-5.0f64..5.0, 8..40),
            seed in 0u64..1000,
        ) {
            let y: Vec<f64> = x.iter().enumerate()
                .map(|(i, v)| v * 0.5 + ((i as u64 * 31 + seed) % 7) as f64 - 3.0)
                .collect();
            prop_assume!(x.iter().any(|v| *v != 0.0));
            let max_lag = x.len() / 3;
            let scan = cross_correlation(&x, &y, max_lag).unwrap();
            for r in &scan.rho {
                prop_assert!(r.abs() <= 1.0 + 1e-12);
                prop_assert!(scan.rho_star() >= *r);
            }
        }
    }
}
