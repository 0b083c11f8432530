//! Manufactured universe: a PT2 plant as ground truth, noisy "experiments",
//! a grid of noise-free simulations and synthetic expert ratings that depend
//! only on how far a simulation's gain and damping are from the truth.
//!
//! Plant, for state `x = [x1, x2]` and unit step `u` at `0.1 s + t_delay`:
//!
//! ```text
//! x1' = P·x1 + x2
//! x2' = -x1/T² - (2D/T)·x2 + (K/T²)·u
//! ```
//!
//! `P` is a process-noise perturbation, drawn once per experiment.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    io_err, write_json, write_ratings_csv, DatasetError, DatasetManifest, ExpertRating,
    LabeledDataset, LabeledRecord, PairFiles, Provenance, MANIFEST_FILE, RATINGS_FILE,
};
use crate::seeds::rng_for;
use crate::series::{SeriesError, SeriesPair, TimeSeries};

pub const STEP_TIME: f64 = 0.1;

#[derive(Debug, Error)]
pub enum UniverseError {
    #[error("invalid universe config: {0}")]
    InvalidConfig(String),
    #[error("integration step {dt} too coarse for time constant {t} (need dt <= t/20)")]
    Resolution { dt: f64, t: f64 },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, UniverseError>;

/// `n` equidistant points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniverseConfig {
    pub k0: f64,
    pub d0: f64,
    /// Seconds.
    pub t0: f64,
    pub sigma_measurement: f64,
    /// Process-noise bounds, 1/s.
    pub p0_values: Vec<f64>,
    /// Milliseconds.
    pub t_delay_values: Vec<f64>,
    /// Simulation gains relative to `k0`.
    pub k_grid: Vec<f64>,
    /// Simulation dampings relative to `d0`.
    pub d_grid: Vec<f64>,
    pub w_k: f64,
    pub w_d: f64,
    pub sigma_exp: f64,
    pub n_experts: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for UniverseConfig {
    fn default() -> Self {
        Self {
            k0: 1.0,
            d0: 0.5,
            t0: 0.07,
            sigma_measurement: 0.01,
            p0_values: vec![0.0, 1.5, 3.0],
            t_delay_values: vec![0.0, 0.5, 1.0],
            k_grid: linspace(0.95, 1.15, 5),
            d_grid: linspace(0.95, 1.15, 5),
            w_k: 0.7,
            w_d: 0.7,
            sigma_exp: 0.05,
            n_experts: 10,
            dt: 1e-3,
            t_end: 1.0,
            seed: 0,
        }
    }
}

impl UniverseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(UniverseError::InvalidConfig(m));
        let positive = [("k0", self.k0), ("d0", self.d0), ("t0", self.t0), ("dt", self.dt)];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return bad(format!("{name} must be positive, got {v}"));
        }
        let sigmas = [("sigma_measurement", self.sigma_measurement), ("sigma_exp", self.sigma_exp)];
        if let Some((name, v)) = sigmas.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return bad(format!("{name} must be >= 0, got {v}"));
        }
        for (name, grid) in [
            ("p0_values", &self.p0_values),
            ("t_delay_values", &self.t_delay_values),
            ("k_grid", &self.k_grid),
            ("d_grid", &self.d_grid),
        ] {
            if grid.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return bad(format!("{name} has negative or non-finite entries"));
            }
        }
        if self.k_grid.contains(&0.0) || self.d_grid.contains(&0.0) {
            return bad("k_grid and d_grid entries must be positive".into());
        }
        if self.n_experts == 0 {
            return bad("n_experts must be >= 1".into());
        }
        if !(self.t_end > STEP_TIME) {
            return bad(format!("t_end {} must exceed the step time {STEP_TIME}", self.t_end));
        }
        if self.dt > self.t0 / 20.0 {
            return Err(UniverseError::Resolution { dt: self.dt, t: self.t0 });
        }
        Ok(())
    }

    /// Square simulation grid with `k` points per axis over `[0.95, 1.15]`.
    pub fn with_grid_size(mut self, k: usize) -> Self {
        self.k_grid = linspace(0.95, 1.15, k);
        self.d_grid = linspace(0.95, 1.15, k);
        self
    }

    pub fn n_experiments(&self) -> usize {
        self.p0_values.len() * self.t_delay_values.len()
    }

    pub fn n_simulations(&self) -> usize {
        self.k_grid.len() * self.d_grid.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pt2Params {
    pub k: f64,
    pub d: f64,
    pub t: f64,
    pub process_noise: f64,
    /// Seconds.
    pub t_delay: f64,
}

impl Pt2Params {
    fn rhs(&self, x: [f64; 2], u: f64) -> [f64; 2] {
        let t2 = self.t * self.t;
        [
            self.process_noise * x[0] + x[1],
            -x[0] / t2 - 2.0 * self.d / self.t * x[1] + self.k / t2 * u,
        ]
    }

    fn rk4(&self, x: [f64; 2], h: f64, u: f64) -> [f64; 2] {
        let add = |a: [f64; 2], b: [f64; 2], s: f64| [a[0] + s * b[0], a[1] + s * b[1]];
        let k1 = self.rhs(x, u);
        let k2 = self.rhs(add(x, k1, h / 2.0), u);
        let k3 = self.rhs(add(x, k2, h / 2.0), u);
        let k4 = self.rhs(add(x, k3, h), u);
        [
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }
}

/// Fixed-step RK4 from rest; output is `x1` sampled at `i·dt` up to `t_end`.
/// A step that straddles the input switch is split there, so the
/// discontinuity costs no accuracy.
pub fn simulate_pt2(params: &Pt2Params, dt: f64, t_end: f64) -> Result<TimeSeries> {
    if !(params.t > 0.0 && params.d > 0.0) {
        return Err(UniverseError::InvalidConfig("PT2 needs t > 0 and d > 0".into()));
    }
    if !(dt > 0.0) || dt > params.t / 20.0 {
        return Err(UniverseError::Resolution { dt, t: params.t });
    }
    let ts = STEP_TIME + params.t_delay;
    let eps = 1e-12;
    let steps = (t_end / dt).round() as usize;
    let mut x = [0.0, 0.0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    for i in 0..steps {
        let (a, b) = (i as f64 * dt, (i + 1) as f64 * dt);
        if a < ts - eps && ts < b - eps {
            x = params.rk4(x, ts - a, 0.0);
            x = params.rk4(x, b - ts, 1.0);
        } else {
            let u = if a >= ts - eps { 1.0 } else { 0.0 };
            x = params.rk4(x, b - a, u);
        }
        out.push(x[0]);
    }
    Ok(TimeSeries::uniform("x1", 0.0, dt, out)?)
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub id: String,
    pub p0: f64,
    pub t_delay_ms: f64,
    pub process_noise: f64,
    pub series: TimeSeries,
}

/// Reference plant with one process-noise draw `P ~ U(-p0, p0)` and i.i.d.
/// Gaussian measurement noise per sample.
pub fn make_experiment(
    config: &UniverseConfig,
    p0: f64,
    t_delay_ms: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Experiment> {
    let process_noise = if p0 > 0.0 { rng.random_range(-p0..p0) } else { 0.0 };
    let params = Pt2Params {
        k: config.k0,
        d: config.d0,
        t: config.t0,
        process_noise,
        t_delay: t_delay_ms * 1e-3,
    };
    let clean = simulate_pt2(&params, config.dt, config.t_end)?;
    let series = if config.sigma_measurement > 0.0 {
        let noise = Normal::new(0.0, config.sigma_measurement).expect("sigma checked");
        let v = clean.values().iter().map(|v| v + noise.sample(rng)).collect();
        TimeSeries::new("measurement", clean.times().to_vec(), v)?
    } else {
        clean.with_name("measurement")
    };
    Ok(Experiment {
        id: String::new(),
        p0,
        t_delay_ms,
        process_noise,
        series,
    })
}

fn relative_deviation(a: f64, a0: f64) -> f64 {
    (2.0 * (a - a0) / (a0 + a)).abs()
}

/// `1 - (w_K·|2(K-K₀)/(K₀+K)| + w_D·|2(D-D₀)/(D₀+D)|) + N(0, σ_exp)`, clamped.
pub fn synth_rating(k: f64, d: f64, config: &UniverseConfig, rng: &mut ChaCha8Rng) -> f64 {
    let base = 1.0 - (config.w_k * relative_deviation(k, config.k0) + config.w_d * relative_deviation(d, config.d0));
    let noise = if config.sigma_exp > 0.0 {
        Normal::new(0.0, config.sigma_exp).expect("sigma checked").sample(rng)
    } else {
        0.0
    };
    (base + noise).clamp(0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub id: String,
    pub k: f64,
    pub d: f64,
    pub series: TimeSeries,
}

#[derive(Debug, Clone)]
pub struct Universe {
    pub config: UniverseConfig,
    pub experiments: Vec<Experiment>,
    pub simulations: Vec<Simulation>,
    pub dataset: LabeledDataset,
}

pub fn pair_id(experiment: usize, simulation: usize) -> String {
    format!("e{experiment}_s{simulation}")
}

pub fn build_dataset(config: &UniverseConfig) -> Result<Universe> {
    config.validate()?;
    let settings: Vec<(f64, f64)> = config
        .p0_values
        .iter()
        .flat_map(|&p0| config.t_delay_values.iter().map(move |&td| (p0, td)))
        .collect();
    let experiments = settings
        .par_iter()
        .enumerate()
        .map(|(i, &(p0, td))| {
            let mut rng = rng_for(config.seed, &[1, i as u64]);
            let mut e = make_experiment(config, p0, td, &mut rng)?;
            e.id = format!("e{i}");
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;

    let grid: Vec<(f64, f64)> = config
        .k_grid
        .iter()
        .flat_map(|&kf| config.d_grid.iter().map(move |&df| (kf * config.k0, df * config.d0)))
        .collect();
    let simulations = grid
        .par_iter()
        .enumerate()
        .map(|(j, &(k, d))| {
            let params = Pt2Params {
                k,
                d,
                t: config.t0,
                process_noise: 0.0,
                t_delay: 0.0,
            };
            let series = simulate_pt2(&params, config.dt, config.t_end)?.with_name("simulation");
            Ok(Simulation {
                id: format!("s{j}"),
                k,
                d,
                series,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cells: Vec<(usize, usize)> = (0..experiments.len())
        .flat_map(|i| (0..simulations.len()).map(move |j| (i, j)))
        .collect();
    let records = cells
        .par_iter()
        .map(|&(i, j)| {
            let (e, s) = (&experiments[i], &simulations[j]);
            let pair = SeriesPair::new(s.series.clone(), e.series.clone())?;
            let mut rng = rng_for(config.seed, &[2, i as u64, j as u64]);
            let ratings = (1..=config.n_experts)
                .map(|m| ExpertRating {
                    expert_id: format!("expert_{m}"),
                    rating: synth_rating(s.k, s.d, config, &mut rng),
                })
                .collect();
            Ok(LabeledRecord {
                pair_id: pair_id(i, j),
                pair: Arc::new(pair),
                ratings,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Universe {
        config: config.clone(),
        experiments,
        simulations,
        dataset: LabeledDataset::new(records, Provenance::Synthetic)?,
    })
}

impl Universe {
    /// Write `experiments/`, `simulations/`, `ratings.csv` and
    /// `manifest.json` under `dir`.
    pub fn write_dir(&self, dir: &Path, run: Option<serde_json::Value>) -> Result<DatasetManifest> {
        for sub in ["experiments", "simulations"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        for e in &self.experiments {
            e.series.write_csv(&dir.join(format!("experiments/{}.csv", e.id)))?;
        }
        for s in &self.simulations {
            s.series.write_csv(&dir.join(format!("simulations/{}.csv", s.id)))?;
        }
        write_ratings_csv(&dir.join(RATINGS_FILE), self.dataset.rating_rows())?;

        let n_sim = self.simulations.len();
        let pairs = self
            .dataset
            .records()
            .iter()
            .enumerate()
            .map(|(idx, r)| PairFiles {
                pair_id: r.pair_id.clone(),
                measurement: format!("experiments/{}.csv", self.experiments[idx / n_sim].id).into(),
                simulation: format!("simulations/{}.csv", self.simulations[idx % n_sim].id).into(),
            })
            .collect();
        let manifest = DatasetManifest {
            provenance: Provenance::Synthetic,
            seed: Some(self.config.seed),
            config: Some(serde_json::to_value(&self.config).map_err(DatasetError::from)?),
            pairs,
            run,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }
}
