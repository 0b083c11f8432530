//! From a labeled dataset to a regression-ready feature matrix.
//!
//! One row per (pair, expert rating). Feature values are computed once per
//! pair and repeated across that pair's ratings.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::metrics::{full_report, MetricConfig, MetricReport, METRIC_NAMES};
use crate::stats::correlation;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("every feature column has missing values")]
    AllFeaturesMissing,
    #[error("correlation threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error("train fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("need at least 2 distinct pairs to split, have {0}")]
    TooFewPairs(usize),
    #[error("malformed feature matrix: {0}")]
    Shape(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

pub const RESERVED_COLUMNS: [&str; 3] = ["pair_id", "expert_id", "rating"];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    feature_names: Vec<String>,
    pair_ids: Vec<String>,
    expert_ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(
        feature_names: Vec<String>,
        pair_ids: Vec<String>,
        expert_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<f64>,
    ) -> Result<Self> {
        let n = rows.len();
        if pair_ids.len() != n || expert_ids.len() != n || labels.len() != n {
            return Err(FeatureError::Shape("row metadata lengths differ".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != feature_names.len()) {
            return Err(FeatureError::Shape(format!("row {i} has wrong width")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FeatureError::Shape("non-finite feature value".into()));
        }
        if let Some(l) = labels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(FeatureError::Shape(format!("label {l} outside [0, 1]")));
        }
        Ok(Self {
            feature_names,
            pair_ids,
            expert_ids,
            rows,
            labels,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn pair_ids(&self) -> &[String] {
        &self.pair_ids
    }

    pub fn expert_ids(&self) -> &[String] {
        &self.expert_ids
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Distinct pair ids in order of first appearance.
    pub fn distinct_pairs(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.pair_ids
            .iter()
            .filter(|p| seen.insert(p.as_str()))
            .map(String::as_str)
            .collect()
    }

    /// Keep only the named columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| FeatureError::Shape(format!("unknown feature `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            feature_names: names.to_vec(),
            pair_ids: self.pair_ids.clone(),
            expert_ids: self.expert_ids.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&j| r[j]).collect())
                .collect(),
            labels: self.labels.clone(),
        })
    }

    /// Rows whose pair id satisfies `keep`.
    pub fn filter_pairs(&self, keep: impl Fn(&str) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| keep(&self.pair_ids[i])).collect();
        Self {
            feature_names: self.feature_names.clone(),
            pair_ids: idx.iter().map(|&i| self.pair_ids[i].clone()).collect(),
            expert_ids: idx.iter().map(|&i| self.expert_ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let header = self
            .feature_names
            .iter()
            .map(String::as_str)
            .chain(RESERVED_COLUMNS);
        wtr.write_record(header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.rows[i].iter().map(f64::to_string).collect();
            rec.push(self.pair_ids[i].clone());
            rec.push(self.expert_ids[i].clone());
            rec.push(self.labels[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let header = rdr.headers()?.clone();
        let pos = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| FeatureError::Shape(format!("missing column `{name}`")))
        };
        let (pi, ei, ri) = (pos("pair_id")?, pos("expert_id")?, pos("rating")?);
        let feature_idx: Vec<usize> = (0..header.len()).filter(|&i| i != pi && i != ei && i != ri).collect();
        let feature_names = feature_idx.iter().map(|&i| header[i].to_string()).collect();

        let (mut pairs, mut experts, mut rows, mut labels) = (vec![], vec![], vec![], vec![]);
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| FeatureError::Shape(format!("cannot parse `{}`", &rec[i])))
            };
            rows.push(feature_idx.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?);
            labels.push(num(ri)?);
            pairs.push(rec[pi].to_string());
            experts.push(rec[ei].to_string());
        }
        Self::new(feature_names, pairs, experts, rows, labels)
    }
}

/// Per-pair metric reports, computed in parallel, in record order.
pub fn compute_reports(dataset: &LabeledDataset, config: &MetricConfig) -> Vec<MetricReport> {
    dataset
        .records()
        .par_iter()
        .map(|r| full_report(&r.pair, config))
        .collect()
}

/// Assemble the feature matrix from precomputed reports. Columns with a
/// missing value in any report are dropped (and logged).
pub fn assemble(dataset: &LabeledDataset, reports: &[MetricReport]) -> Result<FeatureMatrix> {
    if dataset.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    let mut names = Vec::new();
    for name in METRIC_NAMES {
        let missing = dataset
            .records()
            .iter()
            .zip(reports)
            .find_map(|(rec, rep)| match rep.value(name) {
                Some(_) => None,
                None => Some((rec.pair_id.as_str(), rep.get(name))),
            });
        match missing {
            None => names.push(name.to_string()),
            Some((pair_id, entry)) => {
                log::warn!("dropping feature `{name}`: missing for pair `{pair_id}` ({entry:?})");
            }
        }
    }
    if names.is_empty() {
        return Err(FeatureError::AllFeaturesMissing);
    }

    let n = dataset.n_ratings();
    let (mut pairs, mut experts, mut rows, mut labels) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (rec, rep) in dataset.records().iter().zip(reports) {
        let row: Vec<f64> = names.iter().map(|n| rep.value(n).expect("checked above")).collect();
        for r in &rec.ratings {
            pairs.push(rec.pair_id.clone());
            experts.push(r.expert_id.clone());
            rows.push(row.clone());
            labels.push(r.rating);
        }
    }
    FeatureMatrix::new(names, pairs, experts, rows, labels)
}

pub fn compute_features(dataset: &LabeledDataset, config: &MetricConfig) -> Result<FeatureMatrix> {
    if dataset.is_empty() {
        return Err(FeatureError::EmptyDataset);
    }
    assemble(dataset, &compute_reports(dataset, config))
}

/// Names of the columns that survive correlation pruning.
///
/// Constant columns go first. The rest are visited in matrix order and kept
/// unless their absolute correlation with an already kept column exceeds
/// `threshold`.
pub fn uncorrelated_features(fm: &FeatureMatrix, threshold: f64) -> Result<Vec<String>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(FeatureError::InvalidThreshold(threshold));
    }
    let columns: Vec<Vec<f64>> = (0..fm.n_features()).map(|j| fm.column(j)).collect();
    let mut kept: Vec<usize> = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        if col.iter().all(|v| *v == col[0]) {
            log::debug!("dropping constant feature `{}`", fm.feature_names[j]);
            continue;
        }
        let clash = kept.iter().find(|&&k| {
            correlation(&columns[k], col).is_some_and(|c| c.abs() > threshold)
        });
        match clash {
            Some(&k) => log::debug!(
                "dropping `{}`: correlated with `{}`",
                fm.feature_names[j],
                fm.feature_names[k]
            ),
            None => kept.push(j),
        }
    }
    Ok(kept.into_iter().map(|j| fm.feature_names[j].clone()).collect())
}

pub fn drop_correlated(fm: &FeatureMatrix, threshold: f64) -> Result<FeatureMatrix> {
    let keep = uncorrelated_features(fm, threshold)?;
    fm.select_features(&keep)
}

/// Split by pair: every rating of a pair lands on the same side.
pub fn split(fm: &FeatureMatrix, train_fraction: f64, seed: u64) -> Result<(FeatureMatrix, FeatureMatrix)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(FeatureError::InvalidFraction(train_fraction));
    }
    let mut pairs = fm.distinct_pairs();
    if pairs.len() < 2 {
        return Err(FeatureError::TooFewPairs(pairs.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let n_train = ((train_fraction * pairs.len() as f64).round() as usize).clamp(1, pairs.len() - 1);
    let train: BTreeSet<&str> = pairs[..n_train].iter().copied().collect();
    Ok((
        fm.filter_pairs(|p| train.contains(p)),
        fm.filter_pairs(|p| !train.contains(p)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ExpertRating, LabeledRecord, Provenance};
    use crate::series::SeriesPair;
    use std::sync::Arc;

    fn matrix(names: &[&str], cols: &[Vec<f64>]) -> FeatureMatrix {
        let n = cols[0].len();
        FeatureMatrix::new(
            names.iter().map(|s| s.to_string()).collect(),
            (0..n).map(|i| format!("p{i}")).collect(),
            vec!["e".into(); n],
            (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect(),
            vec![0.5; n],
        )
        .unwrap()
    }

    fn record(id: &str, reference: Vec<f64>, n_ratings: usize) -> LabeledRecord {
        let x: Vec<f64> = reference.iter().enumerate().map(|(i, v)| v + 0.01 * (i % 3) as f64).collect();
        LabeledRecord {
            pair_id: id.into(),
            pair: Arc::new(SeriesPair::from_values(x, reference, 0.01).unwrap()),
            ratings: (0..n_ratings)
                .map(|k| ExpertRating {
                    expert_id: format!("e{k}"),
                    rating: 0.1 * k as f64,
                })
                .collect(),
        }
    }

    fn wave(phase: f64) -> Vec<f64> {
        (0..64).map(|i| (i as f64 * 0.2 + phase).sin() + 1.5).collect()
    }

    #[test]
    fn rows_per_rating() {
        let ds = LabeledDataset::new(
            vec![record("a", wave(0.0), 3), record("b", wave(1.0), 2)],
            Provenance::Synthetic,
        )
        .unwrap();
        let fm = compute_features(&ds, &MetricConfig::default()).unwrap();
        assert_eq!(fm.n_rows(), 5);
        assert_eq!(fm.n_features(), 21);
        assert_eq!(fm.rows()[0], fm.rows()[2]);
        assert_eq!(fm.pair_ids()[3], "b");

        let single = LabeledDataset::new(vec![record("a", wave(0.0), 1)], Provenance::Synthetic).unwrap();
        assert_eq!(compute_features(&single, &MetricConfig::default()).unwrap().n_rows(), 1);
    }

    #[test]
    fn constant_reference_drops_variance_columns() {
        let ds = LabeledDataset::new(
            vec![record("a", wave(0.0), 1), record("b", vec![2.0; 64], 1)],
            Provenance::Synthetic,
        )
        .unwrap();
        let fm = compute_features(&ds, &MetricConfig::default()).unwrap();
        for gone in ["r2", "pearson", "explained_variance", "frac_explained_abs", "nrmse"] {
            assert!(!fm.feature_names().iter().any(|n| n == gone), "{gone}");
        }
        assert!(fm.feature_names().iter().any(|n| n == "mae"));
    }

    #[test]
    fn duplicate_column_dropped() {
        let a = vec![1.0, 2.0, 3.0, 5.0];
        let fm = matrix(&["a", "b"], &[a.clone(), a]);
        assert_eq!(drop_correlated(&fm, 0.9).unwrap().feature_names(), ["a"]);
    }

    #[test]
    fn orthogonal_columns_kept() {
        let fm = matrix(&["a", "b"], &[vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0]]);
        assert_eq!(drop_correlated(&fm, 0.9).unwrap().n_features(), 2);
    }

    #[test]
    fn constant_column_dropped_first() {
        let fm = matrix(&["a", "b"], &[vec![3.0; 4], vec![1.0, 2.0, 0.0, 1.0]]);
        assert_eq!(drop_correlated(&fm, 0.9).unwrap().feature_names(), ["b"]);
        assert!(drop_correlated(&fm, 0.0).is_err());
    }

    #[test]
    fn three_columns_one_correlated_pair() {
        // a, b strongly correlated; c weakly related to both.
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + 0.2 * (i as f64 * 1.7).cos()).collect();
        let c: Vec<f64> = (0..50).map(|i| (i as f64 * 1.13).cos() + 0.3 * a[i]).collect();
        let (ab, ac, bc) = (
            correlation(&a, &b).unwrap().abs(),
            correlation(&a, &c).unwrap().abs(),
            correlation(&b, &c).unwrap().abs(),
        );
        assert!(ab > 0.9 && ac < 0.9 && bc < 0.9, "{ab} {ac} {bc}");
        let fm = matrix(&["a", "b", "c"], &[a, b, c]);
        let out = drop_correlated(&fm, 0.9).unwrap();
        assert_eq!(out.feature_names(), ["a", "c"]);
        for i in 0..out.n_features() {
            for j in 0..i {
                assert!(correlation(&out.column(i), &out.column(j)).unwrap().abs() <= 0.9);
            }
        }
    }

    fn ten_pairs() -> FeatureMatrix {
        let n = 30;
        FeatureMatrix::new(
            vec!["f".into()],
            (0..n).map(|i| format!("p{}", i / 3)).collect(),
            (0..n).map(|i| format!("e{}", i % 3)).collect(),
            (0..n).map(|i| vec![i as f64]).collect(),
            vec![0.5; n],
        )
        .unwrap()
    }

    #[test]
    fn split_by_pair() {
        let fm = ten_pairs();
        let (train, test) = split(&fm, 0.8, 42).unwrap();
        assert_eq!(train.distinct_pairs().len(), 8);
        assert_eq!(test.distinct_pairs().len(), 2);
        assert_eq!(train.n_rows() + test.n_rows(), 30);
        assert_eq!(split(&fm, 0.8, 42).unwrap(), (train, test));
    }

    #[test]
    fn split_never_leaks() {
        let fm = ten_pairs();
        for seed in 0..100 {
            let (train, test) = split(&fm, 0.8, seed).unwrap();
            let tr: HashSet<&str> = train.distinct_pairs().into_iter().collect();
            assert!(test.distinct_pairs().iter().all(|p| !tr.contains(p)));
        }
    }

    #[test]
    fn split_errors() {
        let fm = ten_pairs();
        assert!(matches!(split(&fm, 1.0, 0), Err(FeatureError::InvalidFraction(_))));
        let one = fm.filter_pairs(|p| p == "p0");
        assert!(matches!(split(&one, 0.5, 0), Err(FeatureError::TooFewPairs(1))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fm.csv");
        let fm = FeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["p1".into(), "p2".into()],
            vec!["e1".into(), "e2".into()],
            vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0]],
            vec![0.25, 1.0],
        )
        .unwrap();
        fm.write_csv(&path).unwrap();
        assert_eq!(FeatureMatrix::read_csv(&path).unwrap(), fm);
    }
}
