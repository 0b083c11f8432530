//! Durable rating sessions.
//!
//! Layout under the store root, one directory per session:
//!
//! ```text
//! <root>/<session_id>/session.json   manifest, legend, thresholds
//! <root>/<session_id>/ratings.jsonl  append-only submission log
//! ```
//!
//! The in-memory index (latest rating per pair and expert) is rebuilt from
//! the log on open. All writes go through the store's write lock, so each log
//! has a single writer.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use valmetric_core::dataset::{
    load_pair, write_json, write_ratings_csv, DatasetError, DatasetManifest, ExpertRating, PairFiles,
    MANIFEST_FILE, RATINGS_FILE,
};
use valmetric_core::grade::{GradeTable, LegendRow};
use valmetric_core::{LabeledDataset, LabeledRecord, Provenance, SeriesPair};

const SESSION_FILE: &str = "session.json";
const LOG_FILE: &str = "ratings.jsonl";

/// Upper bound on points per series returned to the UI.
pub const MAX_POINTS: usize = 5000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("a session needs at least one pair")]
    EmptySession,
    #[error("duplicate pair id `{0}`")]
    DuplicatePair(String),
    #[error("pair `{pair_id}`: {source}")]
    UnreadablePair {
        pair_id: String,
        #[source]
        source: DatasetError,
    },
    #[error("grade thresholds must be strictly increasing inside (0, 1)")]
    InvalidThresholds,
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown pair `{0}`")]
    UnknownPair(String),
    #[error("pair `{0}` exists in several sessions; pass session_id")]
    AmbiguousPair(String),
    #[error("rating {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("expert_id must not be empty")]
    EmptyExpert,
    #[error("session `{0}` has no rated pairs")]
    NoRatedPairs(String),
    #[error("corrupt log {path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSession {
    pub session_id: String,
    /// Manifest order is presentation order. Paths are absolute.
    pub pairs: Vec<PairFiles>,
    pub legend: Vec<LegendRow>,
    pub thresholds: [f64; 3],
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub record_id: u64,
    pub session_id: String,
    pub pair_id: String,
    pub expert_id: String,
    pub rating: f64,
    pub submitted_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
pub struct NewSession {
    pub pairs: Vec<PairFiles>,
    /// Base for relative series paths; defaults to the server's working
    /// directory.
    #[serde(default)]
    pub base_dir: Option<PathBuf>,
    #[serde(default)]
    pub thresholds: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct NewRating {
    pub expert_id: String,
    pub rating: f64,
    #[serde(default)]
    pub annotation: Option<String>,
    /// Required only when the pair id occurs in more than one session.
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub created_at: String,
    pub n_pairs: usize,
    pub n_ratings: usize,
    pub n_submissions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairData {
    pub t: Vec<f64>,
    pub measurement: Vec<f64>,
    pub simulation: Vec<f64>,
}

/// Every `ceil(n / max)`-th sample, starting with the first.
pub fn decimate(v: &[f64], max: usize) -> Vec<f64> {
    let stride = v.len().div_ceil(max).max(1);
    v.iter().step_by(stride).copied().collect()
}

struct SessionState {
    session: RatingSession,
    pairs: HashMap<String, Arc<SeriesPair>>,
    history: Vec<RatingRecord>,
    /// (pair, expert) → index into `history` of the latest submission.
    latest: BTreeMap<(String, String), usize>,
    log: File,
    log_path: PathBuf,
}

impl SessionState {
    fn apply(&mut self, record: RatingRecord) {
        let key = (record.pair_id.clone(), record.expert_id.clone());
        self.latest.insert(key, self.history.len());
        self.history.push(record);
    }

    /// Latest rating per (pair, expert), pairs in manifest order, experts
    /// sorted by id.
    fn latest_rows(&self) -> Vec<(&str, &str, f64)> {
        let mut rows = Vec::new();
        for files in &self.session.pairs {
            let pair = files.pair_id.as_str();
            let lo = (pair.to_string(), String::new());
            for ((p, e), &i) in self.latest.range(lo..) {
                if p != pair {
                    break;
                }
                rows.push((pair, e.as_str(), self.history[i].rating));
            }
        }
        rows
    }
}

pub struct RatingStore {
    root: PathBuf,
    sessions: RwLock<BTreeMap<String, SessionState>>,
}

fn load_pairs(files: &[PairFiles]) -> Result<HashMap<String, Arc<SeriesPair>>> {
    files
        .iter()
        .map(|f| {
            let pair = load_pair(Path::new("/"), f).map_err(|source| StoreError::UnreadablePair {
                pair_id: f.pair_id.clone(),
                source,
            })?;
            Ok((f.pair_id.clone(), Arc::new(pair)))
        })
        .collect()
}

fn open_log(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

fn replay(path: &Path) -> Result<Vec<RatingRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(io_err(path))?;
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RatingRecord>(line) {
            Ok(r) => records.push(r),
            // a torn final line from an interrupted write is dropped
            Err(e) if i + 1 == lines.len() => {
                log::warn!("{}: ignoring incomplete last line ({e})", path.display());
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

impl RatingStore {
    /// Open (or create) a store, replaying every session log under `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(io_err(&root))?;
        let mut sessions = BTreeMap::new();
        let entries = std::fs::read_dir(&root).map_err(io_err(&root))?;
        for entry in entries {
            let dir = entry.map_err(io_err(&root))?.path();
            let session_path = dir.join(SESSION_FILE);
            if !session_path.is_file() {
                continue;
            }
            let text = std::fs::read_to_string(&session_path).map_err(io_err(&session_path))?;
            let session: RatingSession = serde_json::from_str(&text)?;
            let log_path = dir.join(LOG_FILE);
            let mut state = SessionState {
                pairs: load_pairs(&session.pairs)?,
                session,
                history: Vec::new(),
                latest: BTreeMap::new(),
                log: open_log(&log_path)?,
                log_path: log_path.clone(),
            };
            for r in replay(&log_path)? {
                state.apply(r);
            }
            log::info!(
                "loaded session {} ({} submissions)",
                state.session.session_id,
                state.history.len()
            );
            sessions.insert(state.session.session_id.clone(), state);
        }
        Ok(Self {
            root,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create_session(&self, request: NewSession) -> Result<RatingSession> {
        if request.pairs.is_empty() {
            return Err(StoreError::EmptySession);
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = request.pairs.iter().find(|p| !seen.insert(p.pair_id.as_str())) {
            return Err(StoreError::DuplicatePair(dup.pair_id.clone()));
        }
        let table = match request.thresholds {
            Some(t) => GradeTable::new(t).ok_or(StoreError::InvalidThresholds)?,
            None => GradeTable::default(),
        };
        let base = match request.base_dir {
            Some(b) => b,
            None => std::env::current_dir().map_err(io_err(Path::new(".")))?,
        };
        let absolute = |p: &Path| {
            let p = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            std::path::absolute(&p).unwrap_or(p)
        };
        let pairs: Vec<PairFiles> = request
            .pairs
            .iter()
            .map(|f| PairFiles {
                pair_id: f.pair_id.clone(),
                measurement: absolute(&f.measurement),
                simulation: absolute(&f.simulation),
            })
            .collect();
        let loaded = load_pairs(&pairs)?;

        let session = RatingSession {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            pairs,
            legend: table.legend(),
            thresholds: table.thresholds,
            created_at: now(),
        };
        let dir = self.root.join(&session.session_id);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write_json(&dir.join(SESSION_FILE), &session)?;
        let log_path = dir.join(LOG_FILE);
        let state = SessionState {
            session: session.clone(),
            pairs: loaded,
            history: Vec::new(),
            latest: BTreeMap::new(),
            log: open_log(&log_path)?,
            log_path,
        };
        self.sessions.write().unwrap().insert(session.session_id.clone(), state);
        log::info!("created session {} with {} pairs", session.session_id, session.pairs.len());
        Ok(session)
    }

    pub fn sessions(&self) -> Vec<SessionSummary> {
        let guard = self.sessions.read().unwrap();
        let mut out: Vec<SessionSummary> = guard
            .values()
            .map(|s| SessionSummary {
                session_id: s.session.session_id.clone(),
                created_at: s.session.created_at.clone(),
                n_pairs: s.session.pairs.len(),
                n_ratings: s.latest.len(),
                n_submissions: s.history.len(),
            })
            .collect();
        out.sort_by(|a, b| (&a.created_at, &a.session_id).cmp(&(&b.created_at, &b.session_id)));
        out
    }

    pub fn session(&self, id: &str) -> Result<RatingSession> {
        let guard = self.sessions.read().unwrap();
        guard
            .get(id)
            .map(|s| s.session.clone())
            .ok_or_else(|| StoreError::UnknownSession(id.into()))
    }

    /// Resolve the session owning `pair_id`.
    fn resolve(sessions: &BTreeMap<String, SessionState>, pair_id: &str, session: Option<&str>) -> Result<String> {
        match session {
            Some(id) => {
                let s = sessions.get(id).ok_or_else(|| StoreError::UnknownSession(id.into()))?;
                if !s.pairs.contains_key(pair_id) {
                    return Err(StoreError::UnknownPair(pair_id.into()));
                }
                Ok(id.to_string())
            }
            None => {
                let mut owners = sessions.values().filter(|s| s.pairs.contains_key(pair_id));
                match (owners.next(), owners.next()) {
                    (Some(s), None) => Ok(s.session.session_id.clone()),
                    (None, _) => Err(StoreError::UnknownPair(pair_id.into())),
                    (Some(_), Some(_)) => Err(StoreError::AmbiguousPair(pair_id.into())),
                }
            }
        }
    }

    pub fn pair_data(&self, pair_id: &str, session: Option<&str>) -> Result<PairData> {
        let guard = self.sessions.read().unwrap();
        let id = Self::resolve(&guard, pair_id, session)?;
        let pair = &guard[&id].pairs[pair_id];
        Ok(PairData {
            t: decimate(pair.times(), MAX_POINTS),
            measurement: decimate(pair.reference_values(), MAX_POINTS),
            simulation: decimate(pair.test_values(), MAX_POINTS),
        })
    }

    /// Validate, append to the log, then update the index.
    pub fn record_rating(&self, pair_id: &str, rating: NewRating) -> Result<RatingRecord> {
        if !(0.0..=1.0).contains(&rating.rating) {
            return Err(StoreError::OutOfRange(rating.rating));
        }
        let expert_id = rating.expert_id.trim();
        if expert_id.is_empty() {
            return Err(StoreError::EmptyExpert);
        }
        let mut guard = self.sessions.write().unwrap();
        let id = Self::resolve(&guard, pair_id, rating.session_id.as_deref())?;
        let state = guard.get_mut(&id).expect("resolved");
        let record = RatingRecord {
            record_id: state.history.len() as u64 + 1,
            session_id: id,
            pair_id: pair_id.to_string(),
            expert_id: expert_id.to_string(),
            rating: rating.rating,
            submitted_at: now(),
            annotation: rating.annotation,
        };
        let mut line = serde_json::to_string(&record)?;
        line.push('\n');
        state
            .log
            .write_all(line.as_bytes())
            .and_then(|_| state.log.flush())
            .map_err(io_err(&state.log_path))?;
        state.apply(record.clone());
        Ok(record)
    }

    /// Full submission history, oldest first.
    pub fn history(&self, session_id: &str) -> Result<Vec<RatingRecord>> {
        let guard = self.sessions.read().unwrap();
        let s = guard
            .get(session_id)
            .ok_or_else(|| StoreError::UnknownSession(session_id.into()))?;
        Ok(s.history.clone())
    }

    /// Latest-wins ratings as `pair_id,expert_id,rating` CSV.
    pub fn export_csv(&self, session_id: &str) -> Result<String> {
        let guard = self.sessions.read().unwrap();
        let s = guard
            .get(session_id)
            .ok_or_else(|| StoreError::UnknownSession(session_id.into()))?;
        let mut out = String::from("pair_id,expert_id,rating\n");
        for (p, e, r) in s.latest_rows() {
            out.push_str(&format!("{},{},{}\n", csv_field(p), csv_field(e), r));
        }
        Ok(out)
    }

    pub fn export_dataset(&self, session_id: &str) -> Result<LabeledDataset> {
        let guard = self.sessions.read().unwrap();
        let s = guard
            .get(session_id)
            .ok_or_else(|| StoreError::UnknownSession(session_id.into()))?;
        let mut by_pair: BTreeMap<&str, Vec<ExpertRating>> = BTreeMap::new();
        for (p, e, r) in s.latest_rows() {
            by_pair.entry(p).or_default().push(ExpertRating {
                expert_id: e.to_string(),
                rating: r,
            });
        }
        let mut records = Vec::new();
        for files in &s.session.pairs {
            match by_pair.remove(files.pair_id.as_str()) {
                Some(ratings) => records.push(LabeledRecord {
                    pair_id: files.pair_id.clone(),
                    pair: Arc::clone(&s.pairs[&files.pair_id]),
                    ratings,
                }),
                None => log::warn!("export {session_id}: pair `{}` has no ratings; excluded", files.pair_id),
            }
        }
        if records.is_empty() {
            return Err(StoreError::NoRatedPairs(session_id.into()));
        }
        Ok(LabeledDataset::new(records, Provenance::Collected)?)
    }

    /// Write a dataset directory (`manifest.json` + `ratings.csv`) readable
    /// by the fitting pipeline. Series files are referenced, not copied.
    pub fn export_dir(&self, session_id: &str, dir: &Path) -> Result<LabeledDataset> {
        let dataset = self.export_dataset(session_id)?;
        let session = self.session(session_id)?;
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let rated: std::collections::HashSet<&str> =
            dataset.records().iter().map(|r| r.pair_id.as_str()).collect();
        let manifest = DatasetManifest {
            provenance: Provenance::Collected,
            seed: None,
            config: Some(serde_json::json!({ "session_id": session_id, "thresholds": session.thresholds })),
            pairs: session
                .pairs
                .into_iter()
                .filter(|p| rated.contains(p.pair_id.as_str()))
                .collect(),
            run: None,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        write_ratings_csv(&dir.join(RATINGS_FILE), dataset.rating_rows())?;
        Ok(dataset)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use valmetric_core::TimeSeries;

    pub(crate) fn write_pairs(dir: &Path, n: usize) -> Vec<PairFiles> {
        (0..n)
            .map(|i| {
                let v: Vec<f64> = (0..50).map(|k| ((k + i) as f64 * 0.1).sin()).collect();
                let w: Vec<f64> = v.iter().map(|x| 0.9 * x).collect();
                let m = dir.join(format!("m{i}.csv"));
                let s = dir.join(format!("s{i}.csv"));
                TimeSeries::uniform("m", 0.0, 0.01, v).unwrap().write_csv(&m).unwrap();
                TimeSeries::uniform("s", 0.0, 0.01, w).unwrap().write_csv(&s).unwrap();
                PairFiles {
                    pair_id: format!("pair{i}"),
                    measurement: m,
                    simulation: s,
                }
            })
            .collect()
    }

    fn rating(expert: &str, r: f64) -> NewRating {
        NewRating {
            expert_id: expert.into(),
            rating: r,
            annotation: None,
            session_id: None,
        }
    }

    #[test]
    fn session_validation() {
        let dir = tempfile::tempdir().unwrap();
        let store = RatingStore::open(dir.path().join("store")).unwrap();
        assert!(matches!(store.create_session(NewSession::default()), Err(StoreError::EmptySession)));
        let mut pairs = write_pairs(dir.path(), 2);
        pairs[1].pair_id = "pair0".into();
        let dup = NewSession { pairs, ..Default::default() };
        assert!(matches!(store.create_session(dup), Err(StoreError::DuplicatePair(_))));
        let mut pairs = write_pairs(dir.path(), 1);
        pairs[0].simulation = dir.path().join("missing.csv");
        let missing = NewSession { pairs, ..Default::default() };
        assert!(matches!(store.create_session(missing), Err(StoreError::UnreadablePair { .. })));
        let bad = NewSession {
            pairs: write_pairs(dir.path(), 1),
            thresholds: Some([0.9, 0.5, 0.95]),
            ..Default::default()
        };
        assert!(matches!(store.create_session(bad), Err(StoreError::InvalidThresholds)));

        let ok = store
            .create_session(NewSession {
                pairs: write_pairs(dir.path(), 5),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(ok.pairs.len(), 5);
        assert_eq!(ok.pairs[3].pair_id, "pair3");
        assert_eq!(ok.thresholds, [0.58, 0.8, 0.94]);
        assert_eq!(ok.legend.len(), 4);
    }

    #[test]
    fn latest_wins_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("store");
        let sid = {
            let store = RatingStore::open(&root).unwrap();
            let s = store
                .create_session(NewSession {
                    pairs: write_pairs(dir.path(), 2),
                    ..Default::default()
                })
                .unwrap();
            store.record_rating("pair0", rating("ann", 0.6)).unwrap();
            store.record_rating("pair0", rating("ann", 0.8)).unwrap();
            store.record_rating("pair0", rating("bob", 0.7)).unwrap();
            assert!(matches!(store.record_rating("pair0", rating("bob", 1.2)), Err(StoreError::OutOfRange(_))));
            assert!(matches!(store.record_rating("nope", rating("bob", 0.2)), Err(StoreError::UnknownPair(_))));
            assert!(matches!(store.record_rating("pair1", rating(" ", 0.2)), Err(StoreError::EmptyExpert)));
            assert_eq!(store.history(&s.session_id).unwrap().len(), 3);
            s.session_id
        };
        let store = RatingStore::open(&root).unwrap();
        let csv = store.export_csv(&sid).unwrap();
        assert_eq!(csv, "pair_id,expert_id,rating\npair0,ann,0.8\npair0,bob,0.7\n");
        assert_eq!(store.export_csv(&sid).unwrap(), csv);
        let history = store.history(&sid).unwrap();
        assert_eq!(history.iter().map(|r| r.rating).collect::<Vec<_>>(), [0.6, 0.8, 0.7]);
        // pair1 is unrated and excluded
        let ds = store.export_dataset(&sid).unwrap();
        assert_eq!((ds.n_pairs(), ds.n_ratings()), (1, 2));
        let next = store.record_rating("pair1", rating("ann", 0.5)).unwrap();
        assert_eq!(next.record_id, 4);
    }

    #[test]
    fn torn_last_line_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("store");
        let sid = {
            let store = RatingStore::open(&root).unwrap();
            let s = store
                .create_session(NewSession {
                    pairs: write_pairs(dir.path(), 1),
                    ..Default::default()
                })
                .unwrap();
            store.record_rating("pair0", rating("ann", 0.25)).unwrap();
            s.session_id
        };
        let log = root.join(&sid).join(LOG_FILE);
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(b"{\"record_id\": 2, \"sess").unwrap();
        let store = RatingStore::open(&root).unwrap();
        assert_eq!(store.history(&sid).unwrap().len(), 1);
    }

    #[test]
    fn ambiguous_pairs_need_a_session() {
        let dir = tempfile::tempdir().unwrap();
        let store = RatingStore::open(dir.path().join("store")).unwrap();
        let a = store
            .create_session(NewSession {
                pairs: write_pairs(dir.path(), 1),
                ..Default::default()
            })
            .unwrap();
        store
            .create_session(NewSession {
                pairs: write_pairs(dir.path(), 1),
                ..Default::default()
            })
            .unwrap();
        assert!(matches!(store.record_rating("pair0", rating("x", 0.5)), Err(StoreError::AmbiguousPair(_))));
        let r = NewRating {
            session_id: Some(a.session_id.clone()),
            ..rating("x", 0.5)
        };
        assert_eq!(store.record_rating("pair0", r).unwrap().session_id, a.session_id);
        assert!(store.pair_data("pair0", Some(&a.session_id)).is_ok());
    }

    #[test]
    fn decimation_bound() {
        let v: Vec<f64> = (0..12_345).map(|i| i as f64).collect();
        let d = decimate(&v, MAX_POINTS);
        assert!(d.len() <= MAX_POINTS && d.len() > MAX_POINTS / 2);
        assert_eq!(d[0], 0.0);
        assert_eq!(decimate(&v[..10], MAX_POINTS).len(), 10);
    }
}
