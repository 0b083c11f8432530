//! LASSO by cyclic coordinate descent on standardized features.
//!
//! Objective: `(1/2n)·|y - ȳ - Zw|² + λ·|w|₁`. The intercept is `ȳ`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ols::{check_rows, design, lstsq};
use super::{CustomMetricModel, FitStrategy, RegressError, Result, Standardization};
use crate::features::FeatureMatrix;
use crate::seeds::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LassoPenalty {
    Fixed(f64),
    /// Group k-fold cross-validation by pair over a log grid from `λ_max`
    /// down to `λ_max·1e-3`.
    CrossValidated { folds: usize, n_lambdas: usize },
}

impl Default for LassoPenalty {
    fn default() -> Self {
        LassoPenalty::CrossValidated {
            folds: 5,
            n_lambdas: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    pub max_sweeps: usize,
    /// Stop when no weight moves more than this in a sweep.
    pub tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100_000,
            tol: 1e-12,
        }
    }
}

struct Problem {
    /// Column-major standardized features.
    cols: Vec<Vec<f64>>,
    /// `|z_j|²/n`; zero for constant columns.
    norms: Vec<f64>,
    centered: Vec<f64>,
    mean_y: f64,
    n: usize,
}

impl Problem {
    fn new(rows: &[Vec<f64>], labels: &[f64], s: &Standardization) -> Self {
        let n = rows.len();
        let p = s.mean.len();
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|j| rows.iter().map(|r| s.apply(j, r[j])).collect())
            .collect();
        let norms = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n as f64).collect();
        let mean_y = labels.iter().sum::<f64>() / n as f64;
        Self {
            cols,
            norms,
            centered: labels.iter().map(|y| y - mean_y).collect(),
            mean_y,
            n,
        }
    }

    fn lambda_max(&self) -> f64 {
        self.cols
            .iter()
            .map(|c| dot(c, &self.centered).abs() / self.n as f64)
            .fold(0.0, f64::max)
    }

    /// Coordinate descent from a warm start `w`.
    fn solve(&self, lambda: f64, w: &mut [f64], opts: &LassoOptions) -> Result<()> {
        let n = self.n as f64;
        let mut resid = self.centered.clone();
        for (c, &wj) in self.cols.iter().zip(w.iter()) {
            if wj != 0.0 {
                resid.iter_mut().zip(c).for_each(|(r, z)| *r -= wj * z);
            }
        }
        for _ in 0..opts.max_sweeps {
            let mut max_step = 0.0f64;
            for (j, c) in self.cols.iter().enumerate() {
                let a = self.norms[j];
                if a == 0.0 {
                    continue;
                }
                let rho = dot(c, &resid) / n + a * w[j];
                let new = soft_threshold(rho, lambda) / a;
                let step = new - w[j];
                if step != 0.0 {
                    resid.iter_mut().zip(c).for_each(|(r, z)| *r -= step * z);
                    w[j] = new;
                    max_step = max_step.max(step.abs());
                }
            }
            if max_step <= opts.tol {
                return Ok(());
            }
        }
        Err(RegressError::NoConvergence {
            sweeps: opts.max_sweeps,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Values within rounding of the threshold map to zero, so exact duplicate
/// columns cannot both stay active.
fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v.abs() <= lambda * (1.0 + 1e-9) {
        0.0
    } else {
        v - lambda.copysign(v)
    }
}

/// Smallest penalty at which every weight is zero.
pub fn lambda_max(train: &FeatureMatrix) -> f64 {
    let s = Standardization::fit(train.rows(), train.n_features());
    Problem::new(train.rows(), train.labels(), &s).lambda_max()
}

fn lambda_grid(lmax: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lmax];
    }
    (0..n)
        .map(|i| lmax * 10f64.powf(-3.0 * i as f64 / (n - 1) as f64))
        .collect()
}

fn cross_validate(
    train: &FeatureMatrix,
    folds: usize,
    n_lambdas: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<f64> {
    let mut pairs = train.distinct_pairs();
    if folds < 2 || pairs.len() < folds {
        return Err(RegressError::InvalidPenalty(format!(
            "{folds} folds over {} pairs",
            pairs.len()
        )));
    }
    pairs.shuffle(&mut rng_for(seed, &[0x1a55]));
    let fold_of: HashMap<&str, usize> = pairs.iter().enumerate().map(|(i, p)| (*p, i % folds)).collect();
    let grid = lambda_grid(lambda_max(train), n_lambdas);
    let p = train.n_features();
    let mut sse = vec![0.0; grid.len()];

    for f in 0..folds {
        let fit = train.filter_pairs(|id| fold_of[id] != f);
        let val = train.filter_pairs(|id| fold_of[id] == f);
        let s = Standardization::fit(fit.rows(), p);
        let problem = Problem::new(fit.rows(), fit.labels(), &s);
        let mut w = vec![0.0; p];
        for (g, &lambda) in grid.iter().enumerate() {
            problem.solve(lambda, &mut w, opts)?;
            sse[g] += val
                .rows()
                .iter()
                .zip(val.labels())
                .map(|(r, y)| {
                    let pred = problem.mean_y + (0..p).map(|j| w[j] * s.apply(j, r[j])).sum::<f64>();
                    (y - pred).powi(2)
                })
                .sum::<f64>();
        }
    }
    // first minimum on a decreasing grid: prefer the sparser model on ties
    let best = (0..grid.len()).fold(0, |b, g| if sse[g] < sse[b] { g } else { b });
    log::debug!("lasso cv: lambda {} (grid index {best})", grid[best]);
    Ok(grid[best])
}

/// Fit with a fixed or cross-validated penalty. Features with zero weight are
/// removed; `sigma_train` and `xtx_inv` come from an OLS refit on the
/// surviving features.
pub fn fit_lasso(
    train: &FeatureMatrix,
    penalty: LassoPenalty,
    seed: u64,
    opts: &LassoOptions,
) -> Result<CustomMetricModel> {
    let (n, p) = (train.n_rows(), train.n_features());
    check_rows(n, p)?;
    let (lambda, cv) = match penalty {
        LassoPenalty::Fixed(l) if l >= 0.0 && l.is_finite() => (l, false),
        LassoPenalty::Fixed(l) => return Err(RegressError::InvalidPenalty(format!("lambda {l}"))),
        LassoPenalty::CrossValidated { folds, n_lambdas } => {
            (cross_validate(train, folds, n_lambdas, seed, opts)?, true)
        }
    };

    let s = Standardization::fit(train.rows(), p);
    let problem = Problem::new(train.rows(), train.labels(), &s);
    let mut w = vec![0.0; p];
    problem.solve(lambda, &mut w, opts)?;

    let selected: Vec<usize> = (0..p).filter(|&j| w[j] != 0.0).collect();
    let s_sel = s.subset(&selected);
    let refit = lstsq(design(train.rows(), &selected, &s_sel), train.labels());
    let k = selected.len();
    let mut warnings = Vec::new();
    if refit.rank < k + 1 {
        warnings.push(format!("rank-deficient refit (rank {} of {})", refit.rank, k + 1));
    }
    let mut weights = vec![problem.mean_y];
    weights.extend(selected.iter().map(|&j| w[j]));
    let sigma = (refit.rss / (n - k - 1) as f64).sqrt();
    let model = CustomMetricModel::from_parts(
        selected.iter().map(|&j| train.feature_names()[j].clone()).collect(),
        weights,
        sigma,
        n,
        refit.gram_pinv,
        s_sel,
        FitStrategy::Lasso {
            lambda,
            cross_validated: cv,
        },
        warnings,
    );
    Ok(model.with_seed(seed))
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic;
    use super::super::{fit_ols, score};
    use super::*;

    fn lasso(fm: &FeatureMatrix, lambda: f64) -> CustomMetricModel {
        fit_lasso(fm, LassoPenalty::Fixed(lambda), 0, &LassoOptions::default()).unwrap()
    }

    #[test]
    fn zero_penalty_matches_ols() {
        let fm = synthetic(120, 4, |f| 0.3 * f[0] + 0.2 * f[1] - 0.1 * f[2] + 0.2, 0.02, 21);
        let a = lasso(&fm, 0.0);
        let b = fit_ols(&fm).unwrap();
        assert_eq!(a.feature_names(), b.feature_names());
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        assert!((a.sigma_train() - b.sigma_train()).abs() < 1e-9);
    }

    #[test]
    fn lambda_max_zeroes_everything() {
        let fm = synthetic(100, 3, |f| 0.3 * f[0] + 0.2 * f[1], 0.02, 22);
        let lmax = lambda_max(&fm);
        let m = lasso(&fm, lmax * 1.0001);
        assert_eq!(m.p(), 0);
        let mean = fm.labels().iter().sum::<f64>() / 100.0;
        assert!((m.intercept() - mean).abs() < 1e-12);
        assert!(lasso(&fm, lmax * 0.99).p() > 0);
    }

    #[test]
    fn duplicates_collapse() {
        let base = synthetic(80, 2, |f| 0.4 * f[0] + 0.1 * f[1], 0.02, 23);
        let fm = FeatureMatrix::new(
            vec!["a".into(), "a_copy".into(), "b".into()],
            base.pair_ids().to_vec(),
            base.expert_ids().to_vec(),
            base.rows().iter().map(|r| vec![r[0], r[0], r[1]]).collect(),
            base.labels().to_vec(),
        )
        .unwrap();
        let m = lasso(&fm, 0.001);
        let dup = m.feature_names().iter().filter(|n| n.starts_with('a')).count();
        assert_eq!(dup, 1);
    }

    #[test]
    fn path_is_monotone() {
        let fm = synthetic(200, 6, |f| 0.3 * f[0] + 0.15 * f[1] + 0.05 * f[2] + 0.02 * f[3], 0.02, 24);
        let lmax = lambda_max(&fm);
        let counts: Vec<usize> = lambda_grid(lmax, 10).iter().map(|&l| lasso(&fm, l).p()).collect();
        // grid is decreasing, so counts must be non-decreasing
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
        assert!(counts[0] <= 1 && counts[9] >= 3);
    }

    #[test]
    fn cross_validation_picks_a_useful_penalty() {
        let train = synthetic(300, 5, |f| 0.3 * f[0] + 0.2 * f[1], 0.03, 25);
        let test = synthetic(200, 5, |f| 0.3 * f[0] + 0.2 * f[1], 0.03, 26);
        let m = fit_lasso(&train, LassoPenalty::default(), 7, &LassoOptions::default()).unwrap();
        assert!(matches!(m.strategy(), FitStrategy::Lasso { cross_validated: true, .. }));
        assert!(m.feature_names().iter().any(|n| n == "f1"));
        assert!(score(&m, &test).unwrap() > 0.8);
        let again = fit_lasso(&train, LassoPenalty::default(), 7, &LassoOptions::default()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn errors() {
        let fm = synthetic(50, 2, |f| f[0], 0.01, 27);
        let bad = fit_lasso(&fm, LassoPenalty::Fixed(-1.0), 0, &LassoOptions::default());
        assert!(matches!(bad, Err(RegressError::InvalidPenalty(_))));
        let opts = LassoOptions { max_sweeps: 1, tol: 0.0 };
        let nc = fit_lasso(&fm, LassoPenalty::Fixed(0.0), 0, &opts);
        assert!(matches!(nc, Err(RegressError::NoConvergence { sweeps: 1 })));
    }
}
