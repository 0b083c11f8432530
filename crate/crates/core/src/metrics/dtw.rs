//! Dynamic time warping under a Sakoe-Chiba band.
//!
//! Steps are `(1,0)`, `(0,1)` and `(1,1)`; the local cost is `|a_i - b_j|`.
//! Only cells with `|i - j| <= window` are stored, so memory is
//! `O(n * window)` rather than `O(n^2)`.

use serde::{Deserialize, Serialize};

use super::{MetricError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwAlignment {
    /// Index pairs `(i, j)` from `(0, 0)` to `(n-1, m-1)`.
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
}

struct Band {
    window: usize,
    width: usize,
    cells: Vec<f64>,
}

impl Band {
    fn new(rows: usize, window: usize) -> Self {
        let width = 2 * window + 1;
        Self {
            window,
            width,
            cells: vec![f64::INFINITY; rows * width],
        }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let k = j + self.window;
        if k < i || k - i >= self.width {
            return None;
        }
        Some(i * self.width + (k - i))
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(f64::INFINITY, |s| self.cells[s])
    }
}

/// Align `a` onto `b`. A band narrower than the length difference is widened
/// to `|n - m|` so that a path always exists.
pub fn dtw_align(a: &[f64], b: &[f64], window: usize) -> Result<DtwAlignment> {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Err(MetricError::Empty);
    }
    let window = window.max(n.abs_diff(m)).min(n.max(m) - 1);
    let mut band = Band::new(n, window);

    for i in 0..n {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(m - 1);
        for j in lo..=hi {
            let local = (a[i] - b[j]).abs();
            let prev = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { band.get(i - 1, j - 1) } else { f64::INFINITY };
                let up = if i > 0 { band.get(i - 1, j) } else { f64::INFINITY };
                let left = if j > 0 { band.get(i, j - 1) } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            let slot = band.slot(i, j).expect("cell inside band");
            band.cells[slot] = local + prev;
        }
    }

    let cost = band.get(n - 1, m - 1);
    assert!(cost.is_finite(), "no admissible warping path");

    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        let step = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = band.get(i - 1, j - 1);
            let up = band.get(i - 1, j);
            let left = band.get(i, j - 1);
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        (i, j) = step;
        path.push(step);
    }
    path.reverse();
    Ok(DtwAlignment { path, cost })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Minimal path cost by enumerating every admissible monotone path.
    pub(crate) fn brute_force_cost(a: &[f64], b: &[f64], window: usize) -> f64 {
        fn walk(a: &[f64], b: &[f64], w: usize, i: usize, j: usize, acc: f64, best: &mut f64) {
            let acc = acc + (a[i] - b[j]).abs();
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < a.len() && nj < b.len() && ni.abs_diff(nj) <= w {
                    walk(a, b, w, ni, nj, acc, best);
                }
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, window, 0, 0, 0.0, &mut best);
        best
    }

    fn path_cost(a: &[f64], b: &[f64], path: &[(usize, usize)]) -> f64 {
        path.iter().map(|&(i, j)| (a[i] - b[j]).abs()).sum()
    }

    fn assert_valid_path(path: &[(usize, usize)], n: usize, m: usize, w: usize) {
        assert_eq!(path[0], (0, 0));
        assert_eq!(*path.last().unwrap(), (n - 1, m - 1));
        for step in path.windows(2) {
            let (di, dj) = (step[1].0 - step[0].0, step[1].1 - step[0].1);
            assert!(matches!((di, dj), (1, 0) | (0, 1) | (1, 1)));
        }
        assert!(path.iter().all(|(i, j)| i.abs_diff(*j) <= w));
    }

    #[test]
    fn identical_is_diagonal() {
        let a = [0.0, 1.0, 4.0, 2.0, -1.0];
        let al = dtw_align(&a, &a, 2).unwrap();
        assert_eq!(al.cost, 0.0);
        assert_eq!(al.path, (0..5).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn shifted_no_worse_than_unaligned() {
        let a: Vec<f64> = (0..30).map(|i| (i as f64 * 0.4).sin()).collect();
        let b: Vec<f64> = (0..30).map(|i| ((i as f64 - 2.0) * 0.4).sin()).collect();
        let l1: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum();
        let al = dtw_align(&a, &b, 3).unwrap();
        assert!(al.cost <= l1);
        assert_valid_path(&al.path, 30, 30, 3);
        assert!((path_cost(&a, &b, &al.path) - al.cost).abs() < 1e-12);
    }

    #[test]
    fn zero_window_is_l1() {
        let a = [1.0, 3.0, 2.0, 0.5];
        let b = [0.0, 2.0, 2.5, 1.0];
        let al = dtw_align(&a, &b, 0).unwrap();
        assert_eq!(al.cost, 1.0 + 1.0 + 0.5 + 0.5);
    }

    #[test]
    fn unequal_lengths() {
        let a = [0.0, 1.0, 2.0, 3.0];
        let b = [0.0, 0.0, 1.0, 2.0, 3.0, 3.0];
        let al = dtw_align(&a, &b, 0).unwrap();
        assert_eq!(al.cost, 0.0);
        assert_valid_path(&al.path, 4, 6, 2);
        assert_eq!(dtw_align(&[], &b, 1), Err(MetricError::Empty));
    }

    #[test]
    fn matches_brute_force_on_short_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w = rng.random_range(0..=n);
            let al = dtw_align(&a, &b, w).unwrap();
            let oracle = brute_force_cost(&a, &b, w);
            assert!((al.cost - oracle).abs() < 1e-12, "{al:?} vs {oracle}");
            assert_valid_path(&al.path, n, n, w);
        }
    }
}
