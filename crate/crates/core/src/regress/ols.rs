use nalgebra::{DMatrix, DVector};

use super::{CustomMetricModel, FitStrategy, RegressError, Result, Standardization};
use crate::features::FeatureMatrix;

/// Least-squares solution through the SVD of the design.
pub(crate) struct LstsqSolution {
    pub coef: Vec<f64>,
    /// Row-major pseudo-inverse of `ZᵀZ`.
    pub gram_pinv: Vec<f64>,
    pub rank: usize,
    pub rss: f64,
}

/// Standardized design with a leading intercept column.
pub(crate) fn design(rows: &[Vec<f64>], cols: &[usize], s: &Standardization) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            s.apply(j - 1, rows[i][cols[j - 1]])
        }
    })
}

pub(crate) fn lstsq(z: DMatrix<f64>, y: &[f64]) -> LstsqSolution {
    let k = z.ncols();
    let yv = DVector::from_column_slice(y);
    let svd = z.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let tol = s_max * z.nrows().max(k) as f64 * f64::EPSILON;

    let mut coef = DVector::zeros(k);
    let mut gram = DMatrix::zeros(k, k);
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol {
            continue;
        }
        rank += 1;
        let v = vt.row(i).transpose();
        coef += &v * (u.column(i).dot(&yv) / s);
        gram += &v * v.transpose() / (s * s);
    }
    let gram = (&gram + gram.transpose()) * 0.5;
    let rss = (yv - z * &coef).norm_squared();
    LstsqSolution {
        coef: coef.iter().copied().collect(),
        gram_pinv: (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| gram[(i, j)]).collect(),
        rank,
        rss,
    }
}

pub(crate) fn check_rows(n: usize, p: usize) -> Result<()> {
    if n <= p + 1 {
        return Err(RegressError::TooFewRows { n, needed: p + 1 });
    }
    Ok(())
}

pub fn fit_ols(train: &FeatureMatrix) -> Result<CustomMetricModel> {
    let (n, p) = (train.n_rows(), train.n_features());
    check_rows(n, p)?;
    let s = Standardization::fit(train.rows(), p);
    let cols: Vec<usize> = (0..p).collect();
    let sol = lstsq(design(train.rows(), &cols, &s), train.labels());

    let mut warnings = Vec::new();
    if sol.rank < p + 1 {
        let msg = format!("rank-deficient design (rank {} of {}); pseudo-inverse used", sol.rank, p + 1);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let sigma = (sol.rss / (n - p - 1) as f64).sqrt();
    Ok(CustomMetricModel::from_parts(
        train.feature_names().to_vec(),
        sol.coef,
        sigma,
        n,
        sol.gram_pinv,
        s,
        FitStrategy::Ols,
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::super::tests::synthetic;
    use super::*;

    #[test]
    fn exact_feature_label() {
        let fm = synthetic(50, 3, |f| f[1], 0.0, 11);
        let m = fit_ols(&fm).unwrap();
        let (b, w) = m.raw_weights();
        assert!(b.abs() < 1e-10);
        assert!((w[1] - 1.0).abs() < 1e-10);
        assert!(w[0].abs() < 1e-10 && w[2].abs() < 1e-10);
        assert!(m.sigma_train() < 1e-10);
    }

    #[test]
    fn constant_labels() {
        let fm = synthetic(30, 3, |_| 0.5, 0.0, 12);
        let m = fit_ols(&fm).unwrap();
        assert!((m.intercept() - 0.5).abs() < 1e-10);
        assert!(m.weights()[1..].iter().all(|w| w.abs() < 1e-10));
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let fm = synthetic(200, 4, |f| 0.2 * f[0] - 0.1 * f[3] + 0.3, 0.05, 13);
        let m = fit_ols(&fm).unwrap();
        let s = m.standardization();
        let pred = m.predict_matrix(&fm).unwrap();
        let resid: Vec<f64> = fm.labels().iter().zip(&pred).map(|(y, p)| y - p).collect();
        let n = fm.n_rows() as f64;
        assert!(resid.iter().sum::<f64>().abs() < 1e-8 * n);
        for j in 0..4 {
            let dot: f64 = fm.rows().iter().zip(&resid).map(|(r, e)| s.apply(j, r[j]) * e).sum();
            assert!(dot.abs() < 1e-8 * n, "column {j}: {dot}");
        }
    }

    #[test]
    fn recovers_generator_within_three_se() {
        let fm = synthetic(500, 2, |f| 0.3 * f[0] + 0.2 * f[1], 0.01, 14);
        let m = fit_ols(&fm).unwrap();
        let (_, w) = m.raw_weights();
        let se = m.standard_errors();
        assert!((w[0] - 0.3).abs() < 3.0 * se[0], "{} ± {}", w[0], se[0]);
        assert!((w[1] - 0.2).abs() < 3.0 * se[1], "{} ± {}", w[1], se[1]);
        assert!((m.sigma_train() - 0.01).abs() < 0.002);
    }

    #[test]
    fn duplicate_columns_use_pseudo_inverse() {
        let base = synthetic(40, 2, |f| 0.4 * f[0] + 0.1 * f[1], 0.01, 15);
        let fm = FeatureMatrix::new(
            vec!["a".into(), "a2".into(), "b".into()],
            base.pair_ids().to_vec(),
            base.expert_ids().to_vec(),
            base.rows().iter().map(|r| vec![r[0], r[0], r[1]]).collect(),
            base.labels().to_vec(),
        )
        .unwrap();
        let m = fit_ols(&fm).unwrap();
        assert_eq!(m.warnings().len(), 1);
        // minimum-norm solution splits the weight evenly
        assert!((m.weights()[1] - m.weights()[2]).abs() < 1e-9);
        let reference = fit_ols(&base).unwrap();
        let a = m.predict_matrix(&fm).unwrap();
        let b = reference.predict_matrix(&base).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn too_few_rows() {
        let fm = synthetic(3, 2, |f| f[0], 0.0, 16);
        assert!(matches!(fit_ols(&fm), Err(RegressError::TooFewRows { .. })));
    }

    #[test]
    fn xtx_inv_symmetric() {
        let fm = synthetic(80, 5, |f| f.iter().sum::<f64>() / 5.0, 0.03, 17);
        let m = fit_ols(&fm).unwrap();
        let k = 6;
        let g = m.xtx_inv();
        for i in 0..k {
            for j in 0..k {
                assert!((g[i * k + j] - g[j * k + i]).abs() < 1e-12);
            }
        }
    }
}
