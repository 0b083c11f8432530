//! `valmetric` command-line front end.

pub mod config;
pub mod error;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use valmetric_core::dataset::{load_pair, read_dataset_dir, write_json, DatasetManifest, PairFiles, MANIFEST_FILE};
use valmetric_core::features::compute_features;
use valmetric_core::pipeline::fit_and_score;
use valmetric_core::series::{load_series, SeriesFormat};
use valmetric_core::studies::{sweep, write_report};
use valmetric_core::universe::build_dataset;
use valmetric_core::{align_pair, full_report, AlignPolicy, CustomMetricModel, GradeTable, MetricReport, SeriesPair};
use valmetric_service::RatingStore;

use config::AppConfig;
use error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "valmetric", version, about = "Validation metrics for simulation vs. measurement time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Config override, `section.key=value` (JSON value); repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Args)]
struct PairArgs {
    /// Measurement series (reference).
    #[arg(long, requires = "simulation")]
    measurement: Option<PathBuf>,
    /// Simulation series (test).
    #[arg(long, requires = "measurement")]
    simulation: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic rated dataset.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Compute all base metrics for one pair or a dataset directory.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pair: PairArgs,
        /// Dataset directory with a manifest.
        #[arg(long, conflicts_with = "measurement")]
        data: Option<PathBuf>,
    },
    /// Fit and score a custom metric.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset directory; a synthetic universe is generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Rate a pair with a fitted model.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, conflicts_with = "measurement", requires = "pair_id")]
        data: Option<PathBuf>,
        #[arg(long = "pair", id = "pair_id", requires = "data")]
        pair_id: Option<String>,
    },
    /// Run parameter sweeps on synthetic universes.
    Study {
        #[command(flatten)]
        common: Common,
    },
    /// Serve the rating API (and optionally the UI).
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        /// Static UI directory served at `/`.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Export a rating session as a dataset directory.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        session: String,
    },
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: &'static str,
    tool_version: &'static str,
    seed: Option<u64>,
    config: Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started_at: String,
    finished_at: String,
}

impl RunManifest {
    fn new(command: &'static str, seed: Option<u64>, config: &AppConfig) -> Self {
        Self {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_at: now(),
            finished_at: String::new(),
        }
    }

    fn input(mut self, key: &str, path: &Path) -> Self {
        self.inputs.insert(key.into(), path.display().to_string());
        self
    }

    fn finish(mut self, outputs: &[&str]) -> Self {
        self.outputs = outputs.iter().map(|s| s.to_string()).collect();
        self.finished_at = now();
        self
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("run.json"), self)?;
        Ok(())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("VALMETRIC_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp_millis().try_init();
}

/// Run the CLI and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.kind.exit_code()
        }
    }
}

fn require_seed(common: &Common) -> Result<u64> {
    common.seed.ok_or_else(|| CliError::config("--seed is required"))
}

fn require_out(common: &Common) -> Result<&Path> {
    let out = common.out.as_deref().ok_or_else(|| CliError::config("--out is required"))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
    Ok(out)
}

fn load_config(common: &Common) -> Result<AppConfig> {
    config::load(common.config.as_deref(), &common.overrides)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => generate(&common),
        Command::Metrics { common, pair, data } => metrics(&common, &pair, data.as_deref()),
        Command::Fit { common, data } => fit(&common, data.as_deref()),
        Command::Predict {
            common,
            model,
            pair,
            data,
            pair_id,
        } => predict(&common, &model, &pair, data.as_deref(), pair_id.as_deref()),
        Command::Study { common } => study(&common),
        Command::Serve { common, store, addr, ui } => serve(&common, store, addr, ui),
        Command::Export { common, store, session } => export(&common, store, &session),
    }
}

fn generate(common: &Common) -> Result<()> {
    let mut config = load_config(common)?;
    let seed = require_seed(common)?;
    let out = require_out(common)?;
    config.universe.seed = seed;
    let universe = build_dataset(&config.universe)?;
    let run = RunManifest::new("generate", Some(seed), &config).finish(&[
        MANIFEST_FILE,
        "ratings.csv",
        "experiments/",
        "simulations/",
    ]);
    let run = serde_json::to_value(&run).expect("manifest serializes");
    universe.write_dir(out, Some(run))?;
    say!(
        "{} experiments x {} simulations, {} ratings -> {}",
        universe.experiments.len(),
        universe.simulations.len(),
        universe.dataset.n_ratings(),
        out.display()
    );
    Ok(())
}

fn load_one_pair(args: &PairArgs) -> Result<Option<SeriesPair>> {
    let (Some(m), Some(s)) = (&args.measurement, &args.simulation) else {
        return Ok(None);
    };
    let measurement = load_series(m, SeriesFormat::from_path(m))?;
    let simulation = load_series(s, SeriesFormat::from_path(s))?;
    Ok(Some(align_pair(&simulation, &measurement, AlignPolicy::Intersect)?))
}

fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn manifest_pair(dir: &Path, manifest: &DatasetManifest, id: &str) -> Result<SeriesPair> {
    let files: &PairFiles = manifest
        .pairs
        .iter()
        .find(|p| p.pair_id == id)
        .ok_or_else(|| CliError::data(format!("pair `{id}` not in {}", dir.display())))?;
    Ok(load_pair(dir, files)?)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_line(fields: &[String]) -> String {
    let mut line = fields.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn metrics(common: &Common, pair: &PairArgs, data: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let mc = &config.pipeline.metrics;
    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    let mut run = RunManifest::new("metrics", common.seed, &config);
    if let Some(p) = load_one_pair(pair)? {
        reports.push(("pair".into(), full_report(&p, mc)));
        run = run
            .input("measurement", pair.measurement.as_deref().unwrap())
            .input("simulation", pair.simulation.as_deref().unwrap());
    } else if let Some(dir) = data {
        let manifest = read_manifest(dir)?;
        for files in &manifest.pairs {
            let p = load_pair(dir, files)?;
            reports.push((files.pair_id.clone(), full_report(&p, mc)));
        }
        run = run.input("data", dir);
    } else {
        return Err(CliError::config("metrics needs --measurement/--simulation or --data"));
    }
    for (id, r) in &reports {
        for (name, reason) in r.missing() {
            log::warn!("{id}: {name} unavailable ({reason})");
        }
    }

    match &common.out {
        Some(_) => {
            let out = require_out(common)?;
            let mut csv = csv_line(&MetricReport::csv_header());
            for (id, r) in &reports {
                csv.push_str(&csv_line(&r.csv_row(id)));
            }
            write_file(&out.join("metrics.csv"), &csv)?;
            let map: BTreeMap<&str, &MetricReport> = reports.iter().map(|(k, v)| (k.as_str(), v)).collect();
            write_json(&out.join("metrics.json"), &map)?;
            run.finish(&["metrics.csv", "metrics.json"]).write(out)?;
            say!("{} report(s) -> {}", reports.len(), out.display());
        }
        None => {
            let value = if data.is_none() {
                serde_json::to_value(&reports[0].1)
            } else {
                serde_json::to_value(reports.iter().map(|(k, v)| (k, v)).collect::<BTreeMap<_, _>>())
            }
            .expect("report serializes");
            say!("{}", serde_json::to_string_pretty(&value).expect("json"));
        }
    }
    Ok(())
}

fn fit(common: &Common, data: Option<&Path>) -> Result<()> {
    let mut config = load_config(common)?;
    let seed = require_seed(common)?;
    let mut run = RunManifest::new("fit", Some(seed), &config);
    let dataset = match data {
        Some(dir) => {
            run = run.input("data", dir);
            read_dataset_dir(dir)?.0
        }
        None => {
            config.universe.seed = seed;
            run.config = serde_json::to_value(&config).expect("config serializes");
            build_dataset(&config.universe)?.dataset
        }
    };
    let fm = compute_features(&dataset, &config.pipeline.metrics)?;
    let fitted = fit_and_score(&fm, &config.pipeline, seed)?;
    let model = &fitted.model;
    for w in model.warnings() {
        log::warn!("{w}");
    }

    say!("score {:.6}", fitted.score);
    say!("train rows {}, test rows {}", fitted.train.n_rows(), fitted.test.n_rows());
    say!("features ({}): {}", model.p(), model.feature_names().join(", "));
    let (b, w) = model.raw_weights();
    say!("intercept {b:.6}");
    for (name, (wi, se)) in model.feature_names().iter().zip(w.iter().zip(model.standard_errors().iter())) {
        say!("  {name:<24} {wi:>12.6}  (SE {se:.6})");
    }

    if let Some(out) = &common.out {
        let out = out.as_path();
        require_out(common)?;
        model.save(&out.join("model.json"))?;
        fm.write_csv(&out.join("features.csv"))?;
        let alpha = config.pipeline.alpha;
        let mut csv = csv_line(
            &["pair_id", "expert_id", "rating", "center", "simple_lo", "simple_hi", "full_lo", "full_hi"]
                .map(String::from),
        );
        for row in 0..fitted.test.n_rows() {
            let iv = model.predict_row(&fitted.test, row, alpha)?;
            let mut fields = vec![
                fitted.test.pair_ids()[row].clone(),
                fitted.test.expert_ids()[row].clone(),
                fitted.test.labels()[row].to_string(),
            ];
            fields.extend([iv.center, iv.simple_lo, iv.simple_hi, iv.full_lo, iv.full_hi].map(|v| v.to_string()));
            csv.push_str(&csv_line(&fields));
        }
        write_file(&out.join("predictions.csv"), &csv)?;
        write_json(
            &out.join("score.json"),
            &json!({ "score": fitted.score, "features": model.feature_names(), "seed": seed }),
        )?;
        run.finish(&["model.json", "features.csv", "predictions.csv", "score.json"]).write(out)?;
        say!("model -> {}", out.join("model.json").display());
    }
    Ok(())
}

fn predict(
    common: &Common,
    model_path: &Path,
    pair: &PairArgs,
    data: Option<&Path>,
    pair_id: Option<&str>,
) -> Result<()> {
    let config = load_config(common)?;
    let model = CustomMetricModel::load(model_path)?;
    let (id, p) = match (load_one_pair(pair)?, data, pair_id) {
        (Some(p), _, _) => (None, p),
        (None, Some(dir), Some(id)) => (Some(id), manifest_pair(dir, &read_manifest(dir)?, id)?),
        _ => return Err(CliError::config("predict needs --measurement/--simulation or --data with --pair")),
    };
    let report = full_report(&p, &config.pipeline.metrics);
    let iv = model.predict_report(&report, config.pipeline.alpha)?;
    let grade = iv.grade(&GradeTable::default());
    let body = json!({
        "pair_id": id,
        "rating": iv.rating(),
        "center": iv.center,
        "simple": [iv.simple_lo, iv.simple_hi],
        "full": [iv.full_lo, iv.full_hi],
        "alpha": iv.alpha,
        "grade": grade.label(),
        "rank": grade.rank(),
    });
    let text = serde_json::to_string_pretty(&body).expect("json");
    say!("{text}");
    if common.out.is_some() {
        let out = require_out(common)?;
        write_file(&out.join("prediction.json"), &text)?;
        let mut run = RunManifest::new("predict", common.seed, &config).input("model", model_path);
        if let Some(dir) = data {
            run = run.input("data", dir);
        }
        run.finish(&["prediction.json"]).write(out)?;
    }
    Ok(())
}

fn study(common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let seed = require_seed(common)?;
    let out = require_out(common)?;
    let study = config.study_config();
    let mut results = Vec::new();
    for (parameter, values) in study.resolved_sweeps() {
        let started = std::time::Instant::now();
        let r = sweep(parameter, &values, &study, seed)?;
        log::info!("{parameter}: {} values in {:.1?}", values.len(), started.elapsed());
        results.push(r);
    }
    let checks = write_report(&results, out)?;

    let mut stdout = std::io::stdout().lock();
    for r in &results {
        let _ = writeln!(stdout, "fig{} {}", r.parameter.figure(), r.parameter);
        for p in &r.points {
            let _ = writeln!(stdout, "  {:<10} mean {:.4}  var {:.3e}", p.value, p.stats.mean, p.stats.variance);
        }
    }
    for c in &checks {
        let verdict = if c.passed { "ok" } else { "NOT MET" };
        let _ = writeln!(stdout, "fig{} {}: observed {:.4} [{verdict}]", c.figure, c.claim, c.observed);
    }
    let mut outputs: Vec<String> = results
        .iter()
        .flat_map(|r| {
            let f = r.parameter.figure();
            [format!("fig{f}.csv"), format!("fig{f}_scores.csv"), format!("fig{f}.json")]
        })
        .collect();
    outputs.push("trends.json".into());
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    RunManifest::new("study", Some(seed), &config).finish(&refs).write(out)?;
    Ok(())
}

fn open_store(config: &AppConfig, store: Option<PathBuf>) -> Result<RatingStore> {
    Ok(RatingStore::open(store.unwrap_or_else(|| config.service.store.clone()))?)
}

fn serve(common: &Common, store: Option<PathBuf>, addr: Option<String>, ui: Option<PathBuf>) -> Result<()> {
    let config = load_config(common)?;
    let addr_text = addr.unwrap_or_else(|| config.service.addr.clone());
    let addr: SocketAddr = addr_text
        .parse()
        .map_err(|e| CliError::config(format!("invalid address `{addr_text}`: {e}")))?;
    let ui = ui.or_else(|| config.service.ui_dir.clone());
    let store = Arc::new(open_store(&config, store)?);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    eprintln!("serving on http://{addr}");
    runtime
        .block_on(valmetric_service::serve(store, addr, ui))
        .map_err(|e| CliError::data(format!("server: {e}")))
}

fn export(common: &Common, store: Option<PathBuf>, session: &str) -> Result<()> {
    let config = load_config(common)?;
    let out = require_out(common)?;
    let store = open_store(&config, store)?;
    let dataset = store.export_dir(session, out)?;
    say!(
        "{} pairs, {} ratings -> {}",
        dataset.n_pairs(),
        dataset.n_ratings(),
        out.display()
    );
    Ok(())
}
