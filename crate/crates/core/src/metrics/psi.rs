use serde::{Deserialize, Serialize};

use super::{check_lengths, Result};

/// Mean-square and mean cross-product terms shared by the magnitude/phase
/// metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiStats {
    pub psi_xx: f64,
    pub psi_yy: f64,
    pub psi_xy: f64,
}

impl PsiStats {
    pub fn energy_product(&self) -> f64 {
        self.psi_xx * self.psi_yy
    }
}

pub fn psi_stats(x: &[f64], y: &[f64]) -> Result<PsiStats> {
    let n = check_lengths(x, y)? as f64;
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        xx += a * a;
        yy += b * b;
        xy += a * b;
    }
    Ok(PsiStats {
        psi_xx: xx / n,
        psi_yy: yy / n,
        psi_xy: xy / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_signals() {
        let p = psi_stats(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((p.psi_xx, p.psi_yy, p.psi_xy), (1.0, 1.0, 1.0));
        let p = psi_stats(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!((p.psi_xx, p.psi_yy, p.psi_xy), (4.0, 1.0, 2.0));
    }

    #[test]
    fn matches_indexed_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = psi_stats(&x, &y).unwrap();

        let mut sums = [0.0f64; 3];
        for i in 0..x.len() {
            sums[0] += x[i].powi(2);
            sums[1] += y[i].powi(2);
            sums[2] += x[i] * y[i];
        }
        assert!((p.psi_xx - sums[0] / 100.0).abs() < 1e-12);
        assert!((p.psi_yy - sums[1] / 100.0).abs() < 1e-12);
        assert!((p.psi_xy - sums[2] / 100.0).abs() < 1e-12);
        assert!(p.psi_xy * p.psi_xy <= p.energy_product());
    }
}
