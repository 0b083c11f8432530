//! Labeled datasets: signal pairs with expert ratings.
//!
//! On disk a dataset is a directory holding `manifest.json` (provenance and
//! the pair list with relative series paths) and `ratings.csv`
//! (`pair_id,expert_id,rating`). Series files are `t,v` CSVs.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{align_pair, load_series, AlignPolicy, SeriesError, SeriesFormat, SeriesPair};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("series {path}: {source}")]
    Series {
        path: String,
        #[source]
        source: SeriesError,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Collected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRating {
    pub expert_id: String,
    pub rating: f64,
}

#[derive(Debug, Clone)]
pub struct LabeledRecord {
    pub pair_id: String,
    pub pair: Arc<SeriesPair>,
    pub ratings: Vec<ExpertRating>,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    records: Vec<LabeledRecord>,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(records: Vec<LabeledRecord>, provenance: Provenance) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.pair_id.as_str()) {
                return Err(DatasetError::Invalid(format!("duplicate pair id `{}`", r.pair_id)));
            }
            if r.ratings.is_empty() {
                return Err(DatasetError::Invalid(format!("pair `{}` has no ratings", r.pair_id)));
            }
            if let Some(bad) = r.ratings.iter().find(|e| !(0.0..=1.0).contains(&e.rating)) {
                return Err(DatasetError::Invalid(format!(
                    "pair `{}`: rating {} by `{}` outside [0, 1]",
                    r.pair_id, bad.rating, bad.expert_id
                )));
            }
        }
        Ok(Self { records, provenance })
    }

    pub fn records(&self) -> &[LabeledRecord] {
        &self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn n_pairs(&self) -> usize {
        self.records.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.records.iter().map(|r| r.ratings.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Rows of `ratings.csv`, in record order.
    pub fn rating_rows(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.records.iter().flat_map(|r| {
            r.ratings
                .iter()
                .map(move |e| (r.pair_id.as_str(), e.expert_id.as_str(), e.rating))
        })
    }
}

/// One entry of a dataset manifest; paths are relative to the dataset
/// directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFiles {
    pub pair_id: String,
    pub measurement: PathBuf,
    pub simulation: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub pairs: Vec<PairFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RATINGS_FILE: &str = "ratings.csv";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_ratings_csv<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(["pair_id", "expert_id", "rating"])?;
    for (pair, expert, rating) in rows {
        wtr.write_record([pair, expert, &rating.to_string()])?;
    }
    wtr.flush().map_err(io_err(path))
}

#[derive(Debug, Deserialize)]
struct RatingRow {
    pair_id: String,
    expert_id: String,
    rating: f64,
}

pub fn read_ratings_csv(path: &Path) -> Result<Vec<(String, ExpertRating)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize::<RatingRow>()
        .map(|row| {
            let row = row?;
            Ok((
                row.pair_id,
                ExpertRating {
                    expert_id: row.expert_id,
                    rating: row.rating,
                },
            ))
        })
        .collect()
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

pub fn load_pair(dir: &Path, files: &PairFiles) -> Result<SeriesPair> {
    let load = |p: &Path| {
        let path = resolve(dir, p);
        load_series(&path, SeriesFormat::from_path(&path)).map_err(|source| DatasetError::Series {
            path: path.display().to_string(),
            source,
        })
    };
    let measurement = load(&files.measurement)?;
    let simulation = load(&files.simulation)?;
    align_pair(&simulation, &measurement, AlignPolicy::Intersect).map_err(|source| {
        DatasetError::Series {
            path: files.pair_id.clone(),
            source,
        }
    })
}

/// Read a dataset directory. Pairs without any rating are skipped with a
/// warning; ratings for pairs missing from the manifest are an error.
pub fn read_dataset_dir(dir: &Path) -> Result<(LabeledDataset, DatasetManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;

    let mut by_pair: BTreeMap<String, Vec<ExpertRating>> = BTreeMap::new();
    for (pair_id, rating) in read_ratings_csv(&dir.join(RATINGS_FILE))? {
        by_pair.entry(pair_id).or_default().push(rating);
    }
    let known: HashSet<&str> = manifest.pairs.iter().map(|p| p.pair_id.as_str()).collect();
    if let Some(unknown) = by_pair.keys().find(|k| !known.contains(k.as_str())) {
        return Err(DatasetError::Invalid(format!("ratings reference unknown pair `{unknown}`")));
    }

    let mut records = Vec::with_capacity(manifest.pairs.len());
    let mut cache: BTreeMap<(PathBuf, PathBuf), Arc<SeriesPair>> = BTreeMap::new();
    for files in &manifest.pairs {
        let Some(ratings) = by_pair.remove(&files.pair_id) else {
            log::warn!("pair `{}` has no ratings; skipped", files.pair_id);
            continue;
        };
        let key = (files.measurement.clone(), files.simulation.clone());
        let pair = match cache.get(&key) {
            Some(p) => Arc::clone(p),
            None => {
                let p = Arc::new(load_pair(dir, files)?);
                cache.insert(key, Arc::clone(&p));
                p
            }
        };
        records.push(LabeledRecord {
            pair_id: files.pair_id.clone(),
            pair,
            ratings,
        });
    }
    if records.is_empty() {
        return Err(DatasetError::Invalid("no rated pairs".into()));
    }
    Ok((LabeledDataset::new(records, manifest.provenance)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> Arc<SeriesPair> {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        Arc::new(SeriesPair::from_values(v.clone(), v, 0.1).unwrap())
    }

    fn rating(expert: &str, r: f64) -> ExpertRating {
        ExpertRating {
            expert_id: expert.into(),
            rating: r,
        }
    }

    #[test]
    fn invariants_enforced() {
        let ok = LabeledRecord {
            pair_id: "a".into(),
            pair: pair(),
            ratings: vec![rating("e1", 0.5)],
        };
        assert!(LabeledDataset::new(vec![ok.clone()], Provenance::Collected).is_ok());
        assert!(LabeledDataset::new(vec![ok.clone(), ok.clone()], Provenance::Collected).is_err());
        let empty = LabeledRecord { ratings: vec![], ..ok.clone() };
        assert!(LabeledDataset::new(vec![empty], Provenance::Collected).is_err());
        let bad = LabeledRecord { ratings: vec![rating("e", 1.5)], ..ok };
        assert!(LabeledDataset::new(vec![bad], Provenance::Collected).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = pair();
        p.y().write_csv(&dir.path().join("m.csv")).unwrap();
        p.x().write_csv(&dir.path().join("s.csv")).unwrap();
        let manifest = DatasetManifest {
            provenance: Provenance::Collected,
            seed: None,
            config: None,
            pairs: ["p1", "p2"]
                .iter()
                .map(|id| PairFiles {
                    pair_id: id.to_string(),
                    measurement: "m.csv".into(),
                    simulation: "s.csv".into(),
                })
                .collect(),
            run: None,
        };
        write_json(&dir.path().join(MANIFEST_FILE), &manifest).unwrap();
        write_ratings_csv(
            &dir.path().join(RATINGS_FILE),
            [("p1", "e1", 0.25), ("p1", "e2", 0.75)],
        )
        .unwrap();

        let (ds, back) = read_dataset_dir(dir.path()).unwrap();
        assert_eq!(back, manifest);
        // p2 is unrated and skipped
        assert_eq!(ds.n_pairs(), 1);
        assert_eq!(ds.n_ratings(), 2);
        assert_eq!(ds.records()[0].pair.test_values(), p.test_values());

        write_ratings_csv(&dir.path().join(RATINGS_FILE), [("zz", "e1", 0.5)]).unwrap();
        assert!(matches!(read_dataset_dir(dir.path()), Err(DatasetError::Invalid(_))));
    }
}
