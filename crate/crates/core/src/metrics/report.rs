use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::combined::{russell_from, sprague_geers_from};
use super::eearth::{eearth_from, warped_errors};
use super::iso::iso_from;
use super::{
    corridor_score, cross_correlation, default_max_lag, explained_variance, frac_explained_abs,
    maxae, mae, medae, mse, nise_from_scan, nrmse, pearson, psi_stats, r2, CorridorBounds,
    EearthWeights, MetricError, Normalizer,
};
use crate::series::SeriesPair;

/// Every feature name a report carries, in report (alphabetical) order.
pub const METRIC_NAMES: [&str; 21] = [
    "cross_corr_max",
    "eearth",
    "explained_variance",
    "frac_explained_abs",
    "iso_corridor",
    "iso_r",
    "mae",
    "maxae",
    "medae",
    "mse",
    "nise_c",
    "nise_m",
    "nise_p",
    "nise_s",
    "nrmse",
    "pearson",
    "r2",
    "russell_m",
    "sg_c",
    "sg_m",
    "sg_p",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Largest lag scanned by the cross-correlation; `None` means 10% of the
    /// pair length.
    pub max_lag: Option<usize>,
    /// Sakoe-Chiba half-width; `None` means 10% of the pair length.
    pub dtw_window: Option<usize>,
    pub corridor: CorridorBounds,
    pub eearth_weights: EearthWeights,
    pub nrmse_normalizer: Normalizer,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            max_lag: None,
            dtw_window: None,
            corridor: CorridorBounds::default(),
            eearth_weights: EearthWeights::default(),
            nrmse_normalizer: Normalizer::Range,
        }
    }
}

impl MetricConfig {
    pub fn max_lag_for(&self, n: usize) -> usize {
        self.max_lag.unwrap_or_else(|| default_max_lag(n))
    }

    pub fn window_for(&self, n: usize) -> usize {
        self.dtw_window.unwrap_or_else(|| default_max_lag(n))
    }
}

/// A metric value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricEntry {
    Value(f64),
    Missing(String),
}

impl MetricEntry {
    pub fn value(&self) -> Option<f64> {
        match self {
            MetricEntry::Value(v) => Some(*v),
            MetricEntry::Missing(_) => None,
        }
    }
}

impl From<Result<f64, MetricError>> for MetricEntry {
    fn from(r: Result<f64, MetricError>) -> Self {
        match r {
            Ok(v) if v.is_finite() => MetricEntry::Value(v),
            Ok(v) => MetricEntry::Missing(format!("non-finite value {v}")),
            Err(e) => MetricEntry::Missing(e.to_string()),
        }
    }
}

/// All base metrics for one pair, keyed by name. Serializes as a flat JSON
/// object; missing metrics carry their reason as a string.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport(BTreeMap<String, MetricEntry>);

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<&MetricEntry> {
        self.0.get(name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.0.get(name).and_then(MetricEntry::value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &MetricEntry)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn missing(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().filter_map(|(k, v)| match v {
            MetricEntry::Missing(reason) => Some((k.as_str(), reason.as_str())),
            MetricEntry::Value(_) => None,
        })
    }

    pub fn csv_header() -> Vec<String> {
        std::iter::once("pair_id".to_string())
            .chain(METRIC_NAMES.iter().map(|s| s.to_string()))
            .collect()
    }

    /// One CSV row keyed by `pair_id`; missing metrics become empty cells.
    pub fn csv_row(&self, pair_id: &str) -> Vec<String> {
        std::iter::once(pair_id.to_string())
            .chain(
                METRIC_NAMES
                    .iter()
                    .map(|name| self.value(name).map(|v| v.to_string()).unwrap_or_default()),
            )
            .collect()
    }

    fn insert(&mut self, name: &str, entry: impl Into<MetricEntry>) {
        self.0.insert(name.to_string(), entry.into());
    }
}

fn pick<T>(r: &Result<T, MetricError>, f: impl Fn(&T) -> f64) -> Result<f64, MetricError> {
    r.as_ref().map(f).map_err(Clone::clone)
}

/// Compute every metric in [`METRIC_NAMES`] for one pair. Energies, the lag
/// scan and the warped errors are computed once and shared.
pub fn full_report(pair: &SeriesPair, config: &MetricConfig) -> MetricReport {
    let x = pair.test_values();
    let y = pair.reference_values();
    let n = pair.n();
    let max_lag = config.max_lag_for(n);
    let window = config.window_for(n);
    let mut report = MetricReport::default();

    report.insert("mae", mae(x, y));
    report.insert("mse", mse(x, y));
    report.insert("medae", medae(x, y));
    report.insert("maxae", maxae(x, y));
    report.insert("r2", r2(x, y));
    report.insert("frac_explained_abs", frac_explained_abs(x, y));
    report.insert("explained_variance", explained_variance(x, y));
    report.insert("pearson", pearson(x, y));
    report.insert("nrmse", nrmse(x, y, config.nrmse_normalizer));

    let psi = psi_stats(x, y);
    let sg = psi.as_ref().map_err(Clone::clone).and_then(sprague_geers_from);
    report.insert("sg_m", pick(&sg, |s| s.m));
    report.insert("sg_p", pick(&sg, |s| s.p));
    report.insert("sg_c", pick(&sg, |s| s.c));
    report.insert(
        "russell_m",
        psi.as_ref().map_err(Clone::clone).and_then(russell_from),
    );

    let scan = cross_correlation(x, y, max_lag);
    report.insert("cross_corr_max", scan.as_ref().map(|s| s.rho_star()).map_err(Clone::clone));

    let nise = match (&psi, &scan) {
        (Ok(psi), Ok(scan)) => nise_from_scan(psi, scan),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report.insert("nise_p", pick(&nise, |d| d.p));
    report.insert("nise_m", pick(&nise, |d| d.m));
    report.insert("nise_s", pick(&nise, |d| d.s));
    report.insert("nise_c", pick(&nise, |d| d.c));

    let warped = scan
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|s| warped_errors(x, y, s, window));
    let eearth = match (&scan, &warped) {
        (Ok(s), Ok(w)) => eearth_from(s, w, &config.eearth_weights).map(|e| e.score / 10.0),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report.insert("eearth", eearth);

    let corridor = corridor_score(x, y, &config.corridor);
    report.insert("iso_corridor", corridor.clone());
    let iso = match (&corridor, &scan, &warped) {
        (Ok(z), Ok(s), Ok(w)) => Ok(iso_from(*z, s, w).r),
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => Err(e.clone()),
    };
    report.insert("iso_r", iso);

    debug_assert_eq!(report.0.len(), METRIC_NAMES.len());
    report
}
