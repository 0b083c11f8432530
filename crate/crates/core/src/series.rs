//! Time series loading, validation and alignment.
//!
//! Every metric downstream expects two equal-length signals sampled on the
//! same grid. [`align_pair`] produces that by restricting both series to their
//! common time range and linearly interpolating the test signal onto the
//! reference grid.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two timestamps closer than this are treated as the same grid point.
pub const GRID_TOLERANCE: f64 = 1e-9;

/// Pairs shorter than this are rejected after alignment.
pub const MIN_PAIR_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("time stamps not strictly increasing at index {index}")]
    NonMonotoneTime { index: usize },
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("time and value columns differ in length ({t} vs {v})")]
    LengthMismatch { t: usize, v: usize },
    #[error("series has {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("series do not overlap in time")]
    EmptyOverlap,
    #[error("time grids differ and alignment policy is strict")]
    GridMismatch,
}

/// Accepted on-disk encodings for a single series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesFormat {
    Csv,
    Json,
}

impl SeriesFormat {
    /// Guess from the file extension; anything other than `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => SeriesFormat::Json,
            _ => SeriesFormat::Csv,
        }
    }
}

/// A validated, uniformly typed signal: strictly increasing time stamps and
/// finite values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    name: String,
    t: Vec<f64>,
    v: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeries {
    #[serde(default)]
    name: String,
    t: Vec<f64>,
    v: Vec<f64>,
}

impl<'de> Deserialize<'de> for TimeSeries {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawSeries::deserialize(deserializer)?;
        TimeSeries::new(raw.name, raw.t, raw.v).map_err(serde::de::Error::custom)
    }
}

impl TimeSeries {
    pub fn new(name: impl Into<String>, t: Vec<f64>, v: Vec<f64>) -> Result<Self, SeriesError> {
        if t.len() != v.len() {
            return Err(SeriesError::LengthMismatch {
                t: t.len(),
                v: v.len(),
            });
        }
        if t.len() < 2 {
            return Err(SeriesError::TooShort { len: t.len(), min: 2 });
        }
        for (index, (&ti, &vi)) in t.iter().zip(&v).enumerate() {
            if !ti.is_finite() || !vi.is_finite() {
                return Err(SeriesError::NonFiniteValue { index });
            }
        }
        if let Some(index) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(SeriesError::NonMonotoneTime { index: index + 1 });
        }
        Ok(Self {
            name: name.into(),
            t,
            v,
        })
    }

    /// Uniform grid starting at `t0` with step `dt`; sample `i` sits at `t0 + i*dt`.
    pub fn uniform(
        name: impl Into<String>,
        t0: f64,
        dt: f64,
        v: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        let t = (0..v.len()).map(|i| t0 + i as f64 * dt).collect();
        Self::new(name, t, v)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Linear interpolation at `query`, clamped to the end values outside the
    /// series range. A query equal to a stored time stamp returns the stored
    /// value exactly.
    pub fn interpolate(&self, query: f64) -> f64 {
        let t = &self.t;
        match t.binary_search_by(|probe| probe.total_cmp(&query)) {
            Ok(i) => self.v[i],
            Err(0) => self.v[0],
            Err(i) if i >= t.len() => self.v[t.len() - 1],
            Err(i) => {
                let (t0, t1) = (t[i - 1], t[i]);
                let (v0, v1) = (self.v[i - 1], self.v[i]);
                v0 + (v1 - v0) * (query - t0) / (t1 - t0)
            }
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SeriesError> {
        let io_err = |source| SeriesError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut wtr = csv::Writer::from_path(path).map_err(|e| SeriesError::Parse(e.to_string()))?;
        wtr.write_record(["t", "v"])
            .map_err(|e| SeriesError::Parse(e.to_string()))?;
        for (t, v) in self.t.iter().zip(&self.v) {
            wtr.write_record([t.to_string(), v.to_string()])
                .map_err(|e| SeriesError::Parse(e.to_string()))?;
        }
        wtr.flush().map_err(io_err)
    }
}

/// Parse a `t,v` CSV document.
pub fn parse_csv(name: &str, text: &str) -> Result<TimeSeries, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| SeriesError::Parse(e.to_string()))?
        .clone();
    let col = |label: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(label))
            .ok_or_else(|| SeriesError::Parse(format!("missing column `{label}`")))
    };
    let (ti, vi) = (col("t")?, col("v")?);

    let mut t = Vec::new();
    let mut v = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| SeriesError::Parse(e.to_string()))?;
        let field = |i: usize| -> Result<f64, SeriesError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| SeriesError::Parse(format!("row {}: cannot parse `{raw}`", row + 1)))
        };
        t.push(field(ti)?);
        v.push(field(vi)?);
    }
    TimeSeries::new(name, t, v)
}

pub fn parse_json(text: &str) -> Result<TimeSeries, SeriesError> {
    let raw: RawSeries = serde_json::from_str(text).map_err(|e| SeriesError::Parse(e.to_string()))?;
    TimeSeries::new(raw.name, raw.t, raw.v)
}

pub fn load_series(path: &Path, format: SeriesFormat) -> Result<TimeSeries, SeriesError> {
    let text = std::fs::read_to_string(path).map_err(|source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        SeriesFormat::Csv => {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            parse_csv(name, &text)
        }
        SeriesFormat::Json => parse_json(&text),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignPolicy {
    /// Restrict to the overlapping range and interpolate onto the reference grid.
    #[default]
    Intersect,
    /// Refuse anything but identical grids.
    Error,
}

/// Test signal `x` (simulation) and reference signal `y` (measurement) on one
/// shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPair {
    x: TimeSeries,
    y: TimeSeries,
}

impl SeriesPair {
    /// Build a pair from series already on the same grid.
    pub fn new(x: TimeSeries, y: TimeSeries) -> Result<Self, SeriesError> {
        if !same_grid(&x, &y) {
            return Err(SeriesError::GridMismatch);
        }
        if x.len() < MIN_PAIR_LEN {
            return Err(SeriesError::TooShort {
                len: x.len(),
                min: MIN_PAIR_LEN,
            });
        }
        Ok(Self { x, y })
    }

    /// Convenience constructor on a uniform grid with step `dt` starting at 0.
    pub fn from_values(x: Vec<f64>, y: Vec<f64>, dt: f64) -> Result<Self, SeriesError> {
        let x = TimeSeries::uniform("x", 0.0, dt, x)?;
        let y = TimeSeries::uniform("y", 0.0, dt, y)?;
        Self::new(x, y)
    }

    pub fn x(&self) -> &TimeSeries {
        &self.x
    }

    pub fn y(&self) -> &TimeSeries {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn times(&self) -> &[f64] {
        self.y.times()
    }

    pub fn test_values(&self) -> &[f64] {
        self.x.values()
    }

    pub fn reference_values(&self) -> &[f64] {
        self.y.values()
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}

impl fmt::Display for SeriesPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} vs {} ({} samples)", self.x.name, self.y.name, self.n())
    }
}

fn same_grid(a: &TimeSeries, b: &TimeSeries) -> bool {
    a.len() == b.len()
        && a.t
            .iter()
            .zip(&b.t)
            .all(|(p, q)| (p - q).abs() < GRID_TOLERANCE)
}

/// Bring `x` (test) and `y` (reference) onto a common grid.
///
/// Identical grids pass through untouched. Otherwise, with
/// [`AlignPolicy::Intersect`], the reference grid is cut to the overlap of both
/// time ranges and `x` is linearly interpolated onto it.
pub fn align_pair(
    x: &TimeSeries,
    y: &TimeSeries,
    policy: AlignPolicy,
) -> Result<SeriesPair, SeriesError> {
    if same_grid(x, y) {
        let x = TimeSeries {
            name: x.name.clone(),
            t: y.t.clone(),
            v: x.v.clone(),
        };
        return SeriesPair::new(x, y.clone());
    }
    if policy == AlignPolicy::Error {
        return Err(SeriesError::GridMismatch);
    }

    let lo = x.start().max(y.start());
    let hi = x.end().min(y.end());
    if hi < lo - GRID_TOLERANCE {
        return Err(SeriesError::EmptyOverlap);
    }

    let (t, yv): (Vec<f64>, Vec<f64>) = y
        .t
        .iter()
        .zip(&y.v)
        .filter(|(&ti, _)| ti >= lo - GRID_TOLERANCE && ti <= hi + GRID_TOLERANCE)
        .map(|(&ti, &vi)| (ti, vi))
        .unzip();
    if t.is_empty() {
        return Err(SeriesError::EmptyOverlap);
    }
    if t.len() < MIN_PAIR_LEN {
        return Err(SeriesError::TooShort {
            len: t.len(),
            min: MIN_PAIR_LEN,
        });
    }
    let xv = t.iter().map(|&q| x.interpolate(q)).collect();

    let x = TimeSeries {
        name: x.name.clone(),
        t: t.clone(),
        v: xv,
    };
    let y = TimeSeries {
        name: y.name.clone(),
        t,
        v: yv,
    };
    SeriesPair::new(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
        let n = ((t1 - t0) / dt).round() as usize;
        (0..=n).map(|i| t0 + i as f64 * dt).collect()
    }

    #[test]
    fn csv_three_rows() {
        let s = parse_csv("s", "t,v\n0,0\n0.1,1\n0.2,1").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn csv_crlf_and_header_case() {
        let s = parse_csv("s", "T,V\r\n0,1\r\n1,2\r\n").unwrap();
        assert_eq!(s.times(), &[0.0, 1.0]);
    }

    #[test]
    fn csv_non_monotone() {
        let err = parse_csv("s", "t,v\n0,0\n0.2,1\n0.1,1").unwrap_err();
        assert!(matches!(err, SeriesError::NonMonotoneTime { index: 2 }));
    }

    #[test]
    fn csv_nan() {
        let err = parse_csv("s", "t,v\n0,0\n0.1,NaN\n0.2,1").unwrap_err();
        assert!(matches!(err, SeriesError::NonFiniteValue { index: 1 }));
    }

    #[test]
    fn csv_garbage_is_parse_error() {
        assert!(matches!(
            parse_csv("s", "t,v\n0,abc\n1,2"),
            Err(SeriesError::Parse(_))
        ));
        assert!(matches!(parse_csv("s", "a,b\n0,1\n1,2"), Err(SeriesError::Parse(_))));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let s = parse_json(r#"{"name":"m","t":[0,1,2],"v":[1,2,3]}"#).unwrap();
        assert_eq!(s.name(), "m");
        let back: TimeSeries = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert!(matches!(
            parse_json(r#"{"name":"m","t":[0,1],"v":[1]}"#),
            Err(SeriesError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meas.csv");
        std::fs::write(&path, "t,v\n0,0\n0.1,1\n0.2,1\n").unwrap();
        let s = load_series(&path, SeriesFormat::from_path(&path)).unwrap();
        assert_eq!(s.name(), "meas");
        s.write_csv(&path).unwrap();
        assert_eq!(load_series(&path, SeriesFormat::Csv).unwrap(), s);
        assert!(matches!(
            load_series(&dir.path().join("missing.csv"), SeriesFormat::Csv),
            Err(SeriesError::Io { .. })
        ));
    }

    #[test]
    fn identical_grids_unchanged() {
        let t = grid(0.0, 1.0, 0.01);
        let x = TimeSeries::new("x", t.clone(), t.iter().map(|v| v.sin()).collect()).unwrap();
        let y = TimeSeries::new("y", t.clone(), t.iter().map(|v| v.cos()).collect()).unwrap();
        let pair = align_pair(&x, &y, AlignPolicy::Error).unwrap();
        assert_eq!(pair.x(), &x);
        assert_eq!(pair.y(), &y);
    }

    #[test]
    fn intersect_overlap_count() {
        // Expected count by enumerating reference grid points inside [0.5, 1.0].
        let tx = grid(0.0, 1.0, 1e-3);
        let ty = grid(0.5, 1.5, 1e-3);
        let expected = ty
            .iter()
            .filter(|&&t| t >= 0.5 - 1e-9 && t <= 1.0 + 1e-9)
            .count();
        assert_eq!(expected, 501);

        let x = TimeSeries::new("x", tx.clone(), tx.clone()).unwrap();
        let y = TimeSeries::new("y", ty.clone(), ty.iter().map(|t| 2.0 * t).collect()).unwrap();
        let pair = align_pair(&x, &y, AlignPolicy::Intersect).unwrap();
        assert_eq!(pair.n(), 501);
        assert!((pair.times()[0] - 0.5).abs() < 1e-12);
        assert!((pair.times()[500] - 1.0).abs() < 1e-9);
        // x(t) = t is reproduced by linear interpolation.
        for (t, v) in pair.times().iter().zip(pair.test_values()) {
            assert!((t - v).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_is_empty_overlap() {
        let x = TimeSeries::new("x", grid(0.0, 1.0, 0.1), vec![0.0; 11]).unwrap();
        let y = TimeSeries::new("y", grid(2.0, 3.0, 0.1), vec![0.0; 11]).unwrap();
        assert!(matches!(
            align_pair(&x, &y, AlignPolicy::Intersect),
            Err(SeriesError::EmptyOverlap)
        ));
        assert!(matches!(
            align_pair(&x, &y, AlignPolicy::Error),
            Err(SeriesError::GridMismatch)
        ));
    }

    #[test]
    fn short_overlap_rejected() {
        let x = TimeSeries::new("x", grid(0.0, 1.0, 0.1), vec![0.0; 11]).unwrap();
        let y = TimeSeries::new("y", grid(0.75, 1.75, 0.1), vec![0.0; 11]).unwrap();
        assert!(matches!(
            align_pair(&x, &y, AlignPolicy::Intersect),
            Err(SeriesError::TooShort { .. })
        ));
    }

    #[test]
    fn alignment_is_idempotent() {
        let x = TimeSeries::new("x", grid(0.0, 1.0, 0.003), grid(0.0, 1.0, 0.003).iter().map(|t| t * t).collect()).unwrap();
        let y = TimeSeries::new("y", grid(0.2, 1.4, 0.002), vec![1.0; 601]).unwrap();
        let once = align_pair(&x, &y, AlignPolicy::Intersect).unwrap();
        let twice = align_pair(once.x(), once.y(), AlignPolicy::Intersect).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn interpolation_exact_on_grid_points() {
        let t = vec![0.0, 0.3, 0.7, 1.1];
        let v = vec![0.1, -2.5, 3.7, 1e-3];
        let s = TimeSeries::new("s", t.clone(), v.clone()).unwrap();
        for (ti, vi) in t.iter().zip(&v) {
            assert_eq!(s.interpolate(*ti), *vi);
        }
        assert_eq!(s.interpolate(-1.0), 0.1);
        assert_eq!(s.interpolate(5.0), 1e-3);
    }
}
