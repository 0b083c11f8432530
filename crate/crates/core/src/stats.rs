//! Small statistics helpers: quantiles, moments, column correlation.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Student-t quantile with `df` degrees of freedom, inverted through the
/// regularized incomplete beta function.
pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population variance; zero for a single value.
pub fn population_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64
}

/// Pearson correlation of two columns, `None` if either is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantiles() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
        assert!((normal_quantile(0.5)).abs() < 1e-12);
    }

    #[test]
    fn t_quantiles_against_tables() {
        // Closed forms for df = 1, 2; the rest from scipy.stats.t.ppf.
        let cases = [
            (1.0, (0.475 * std::f64::consts::PI).tan()),
            (2.0, 0.95 * (2.0f64 / (1.0 - 0.95 * 0.95)).sqrt()),
            (5.0, 2.570_581_835_636_314),
            (10.0, 2.228_138_851_964_938_5),
            (30.0, 2.042_272_456_301_237_3),
            (1000.0, 1.962_339_080_826_407_4),
        ];
        for (df, q) in cases {
            let got = student_t_quantile(0.975, df);
            assert!((got - q).abs() < 1e-8, "df {df}: {got} vs {q}");
        }
        assert!((student_t_quantile(0.025, 10.0) + 2.228_138_851_964_938_5).abs() < 1e-8);
    }

    #[test]
    fn t_approaches_normal() {
        assert!(student_t_quantile(0.975, 1e6) - normal_quantile(0.975) < 1e-5);
    }

    #[test]
    fn correlation_edge_cases() {
        assert_eq!(correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert!((correlation(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(population_variance(&[3.0]), 0.0);
    }
}
