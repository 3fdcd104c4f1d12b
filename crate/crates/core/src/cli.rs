//! Command-line front end: `synth`, `vix`, `backtest`, `weights`, `report`.
//!
//! Stages hand off through files, so a long backtest can be inspected or
//! resumed without rerunning data generation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::features::{FeatureConfig, FeatureError, Normalizer};
use crate::index_builder::{self, IndexBuilderError};
use crate::market_data::{self, generate_synthetic_market, MarketDataError, SyntheticMarketConfig};
use crate::regressors::{self, Algorithm, RegressionModel, RegressorError};
use crate::targets::{Mode, TargetError};
use crate::validation::{self, BacktestConfig, ValidationError};
use crate::vix::{synthetic_vix, VixConfig, VixError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("market_data: {0}")]
    MarketData(#[from] MarketDataError),
    #[error("vix_engine: {0}")]
    Vix(#[from] VixError),
    #[error("feature_pipeline: {0}")]
    Feature(#[from] FeatureError),
    #[error("targets: {0}")]
    Target(#[from] TargetError),
    #[error("regressors: {0}")]
    Regressor(#[from] RegressorError),
    #[error("validation: {0}")]
    Validation(#[from] ValidationError),
    #[error("index_builder: {0}")]
    IndexBuilder(#[from] IndexBuilderError),
    #[error("cli: {0}")]
    Usage(String),
    #[error("cli: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io(path))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io(path))
}

#[derive(Debug, Parser)]
#[command(name = "volindex", version, about = "Option-implied realized-variance forecasting and tradable indexing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic market into a directory of CSV files.
    Synth(SynthArgs),
    /// Compute the synthetic index for every day of a market.
    Vix(VixArgs),
    /// Walk-forward backtest of one algorithm in one mode.
    Backtest(BacktestArgs),
    /// Option weights replicating one day's forecast of a saved fold model.
    Weights(WeightsArgs),
    /// Tabulate out-of-sample R² from finished backtests.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Flat key-value generator config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub premium: Option<f64>,
    #[arg(long)]
    pub strike_spacing: Option<f64>,
    #[arg(long)]
    pub strikes_per_side: Option<usize>,
    #[arg(long)]
    pub gap_rate: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VixArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub horizon: i64,
    /// Cap on options per side of K0; omitted keeps the full strip.
    #[arg(long)]
    pub n_per_side: Option<usize>,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = parse_algo)]
    pub algo: Algorithm,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Mode,
    /// Strikes each side of K0 in the feature grid (2k+1 option features).
    #[arg(long, default_value_t = 10)]
    pub n_per_side: usize,
    #[arg(long, default_value_t = 30)]
    pub horizon: usize,
    /// Take every `s`-th listed strike when building the grid.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub step_spacing: u8,
    #[arg(long)]
    pub with_returns_features: bool,
    #[arg(long, default_value_t = 1000)]
    pub initial: usize,
    #[arg(long, default_value_t = 30)]
    pub step: usize,
    /// Seed for network initialisation and forest bootstraps.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Fit the network to unshifted variance-premium targets.
    #[arg(long)]
    pub no_shift: bool,
    /// Weights below this magnitude are not counted as material legs.
    #[arg(long, default_value_t = 1e-6)]
    pub materiality: f64,
    /// Worker threads for folds.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// A fold bundle written by `backtest` (models/fold_NNN.model).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub date: NaiveDate,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directories searched (recursively) for backtest outputs.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_algo(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse()
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse()
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Vix(a) => vix(&a),
        Command::Backtest(a) => backtest(&a),
        Command::Weights(a) => weights(&a),
        Command::Report(a) => report(&a),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SyntheticMarketConfig::from_toml_str(&read(p)?)?,
        None => SyntheticMarketConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.rng_seed = v;
    }
    if let Some(v) = a.days {
        cfg.n_days = v;
    }
    if let Some(v) = a.premium {
        cfg.premium = v;
    }
    if let Some(v) = a.strike_spacing {
        cfg.strike_spacing = v;
    }
    if let Some(v) = a.strikes_per_side {
        cfg.strikes_per_side = v;
    }
    if let Some(v) = a.gap_rate {
        cfg.quote_gap_rate = v;
    }
    let m = generate_synthetic_market(&cfg)?;
    fs::create_dir_all(&a.out).map_err(io(&a.out))?;
    market_data::write_market(&a.out, &m.market)?;
    write(&a.out.join("synth.toml"), &cfg.to_toml_string())?;
    let mut var = String::from("date,variance\n");
    for (d, v) in m.market.prices.dates().iter().zip(&m.variance) {
        let _ = writeln!(var, "{d},{v}");
    }
    write(&a.out.join("variance.csv"), &var)
}

fn vix(a: &VixArgs) -> Result<()> {
    let market = market_data::load_market(&a.data)?;
    let cfg = VixConfig { max_per_side: a.n_per_side, ..VixConfig::default() };
    let mut out = String::from("date,vix,vix_star_sq,n_options\n");
    for snap in &market.chains {
        let r = synthetic_vix(snap, a.horizon, &cfg)?;
        let _ = writeln!(out, "{},{},{},{}", r.date, r.value, r.vix_star_sq(), r.option_count);
    }
    emit(&a.out, &out)
}

fn feature_config(n_per_side: usize, horizon: usize, step: usize, returns: bool) -> FeatureConfig {
    FeatureConfig {
        horizon_days: horizon as i64,
        strikes_per_side: n_per_side,
        strike_step: step,
        include_returns_features: returns,
        ..FeatureConfig::default()
    }
}

fn backtest(a: &BacktestArgs) -> Result<()> {
    if a.n_per_side == 0 {
        return Err(Error::Usage("--n-per-side must be positive".into()));
    }
    let market = market_data::load_market(&a.data)?;
    let fcfg = feature_config(a.n_per_side, a.horizon, a.step_spacing as usize, a.with_returns_features);
    let vcfg = VixConfig::with_max_per_side(a.n_per_side);
    let (samples, _) = validation::build_samples(&market, &fcfg, &vcfg)?;

    let mut train = regressors::TrainConfig::default();
    train.fnn.epochs = a.epochs;
    train.fnn.seed = a.seed;
    train.forest.n_trees = a.trees;
    train.forest.seed = a.seed;
    let cfg = BacktestConfig {
        initial: a.initial,
        step: a.step,
        horizon: a.horizon,
        train,
        shift_reg2_targets: !a.no_shift,
        jobs: a.jobs,
        ..BacktestConfig::default()
    };
    let mut report = validation::run_backtest(&samples, a.algo, a.mode, &cfg)?;
    let bench = validation::run_vix_benchmark(&samples, &cfg)?;

    fs::create_dir_all(a.out.join("models")).map_err(io(&a.out))?;
    if a.algo.is_piecewise_linear() && !a.with_returns_features {
        let series = index_builder::portfolio_series(&report, &samples, &market.chains)?;
        let weights: Vec<_> = series.iter().map(|(w, _)| w.clone()).collect();
        report.weight_summaries = index_builder::liquidity_report(&weights, a.materiality);
        write(&a.out.join("weights_summary.csv"), &index_builder::summary_csv(&report.weight_summaries))?;
        write(&a.out.join("replication.csv"), &index_builder::replication_csv(&series))?;
        if let Some((w, r)) = series.iter().find(|(_, r)| !r.passed()) {
            return Err(Error::Usage(format!("{}: replication residual {} exceeds {}", w.date, r.residual, r.tolerance)));
        }
    }
    write(&a.out.join("predictions.csv"), &report.predictions_csv())?;
    write(&a.out.join("summary.csv"), &report.summary_csv())?;
    write(&a.out.join("benchmark.csv"), &bench.summary_csv())?;
    let data = fs::canonicalize(&a.data).map_err(io(&a.data))?;
    for fold in &report.folds {
        if let Some((model, norm)) = &fold.model {
            let bundle = Bundle { data: data.clone(), mode: a.mode, features: fcfg.clone(), vix: vcfg, normalizer: norm.clone(), model: model.clone() };
            write(&a.out.join("models").join(format!("fold_{:03}.model", fold.plan.fold)), &bundle.to_text())?;
        }
    }
    Ok(())
}

const BUNDLE_TAG: &str = "volindex-bundle 1";

/// Everything needed to recompute a fold's forecast and its weights.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub data: PathBuf,
    pub mode: Mode,
    pub features: FeatureConfig,
    pub vix: VixConfig,
    pub normalizer: Normalizer,
    pub model: RegressionModel,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl Bundle {
    pub fn to_text(&self) -> String {
        let f = &self.features;
        let mut s = String::new();
        let _ = writeln!(s, "{BUNDLE_TAG}");
        let _ = writeln!(s, "data {}", self.data.display());
        let _ = writeln!(s, "mode {}", self.mode);
        let _ = writeln!(s, "horizon {}", f.horizon_days);
        let _ = writeln!(s, "strikes_per_side {}", f.strikes_per_side);
        let _ = writeln!(s, "strike_step {}", f.strike_step);
        let _ = writeln!(s, "returns_features {}", f.include_returns_features);
        let _ = writeln!(s, "vix_max_per_side {}", self.vix.max_per_side.map_or("none".into(), |n| n.to_string()));
        let _ = writeln!(s, "normalizer_mean {}", join(&self.normalizer.mean));
        let _ = writeln!(s, "normalizer_std {}", join(&self.normalizer.std));
        s.push_str(&regressors::write_model(&self.model));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Usage(format!("bundle: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some(BUNDLE_TAG) {
            return Err(bad("missing header"));
        }
        let mut kv = BTreeMap::new();
        let mut rest = String::new();
        for line in lines.by_ref() {
            if line.starts_with(regressors::FORMAT_TAG) {
                rest.push_str(line);
                rest.push('\n');
                break;
            }
            let (k, v) = line.split_once(' ').ok_or_else(|| bad(&format!("bad line '{line}'")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        for line in lines {
            rest.push_str(line);
            rest.push('\n');
        }
        let get = |k: &str| kv.get(k).cloned().ok_or_else(|| bad(&format!("missing '{k}'")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(&format!("bad '{k}'"))) };
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?.split_whitespace().map(|t| t.parse().map_err(|_| bad(&format!("bad '{k}'")))).collect()
        };
        let features = FeatureConfig {
            horizon_days: num("horizon")? as i64,
            strikes_per_side: num("strikes_per_side")?,
            strike_step: num("strike_step")?,
            include_returns_features: get("returns_features")? == "true",
            ..FeatureConfig::default()
        };
        let cap = get("vix_max_per_side")?;
        let vix = VixConfig {
            max_per_side: if cap == "none" { None } else { Some(cap.parse().map_err(|_| bad("bad vix_max_per_side"))?) },
            ..VixConfig::default()
        };
        Ok(Bundle {
            data: PathBuf::from(get("data")?),
            mode: get("mode")?.parse().map_err(|e: String| bad(&e))?,
            features,
            vix,
            normalizer: Normalizer { mean: floats("normalizer_mean")?, std: floats("normalizer_std")? },
            model: regressors::read_model(&rest)?,
        })
    }
}

fn weights(a: &WeightsArgs) -> Result<()> {
    let bundle = Bundle::from_text(&read(&a.model)?)?;
    if bundle.features.include_returns_features {
        return Err(IndexBuilderError::ReturnsFeatures.into());
    }
    if let RegressionModel::Forest(_) = bundle.model {
        return Err(RegressorError::NotPiecewiseLinear("random forest").into());
    }
    let market = market_data::load_market(&bundle.data)?;
    let snap = market
        .chains
        .iter()
        .find(|s| s.quote_date == a.date)
        .ok_or(IndexBuilderError::MissingSnapshot(a.date))?;
    let row = crate::features::option_features(snap, &bundle.features)?;
    let vix = match bundle.mode {
        Mode::RegI => None,
        Mode::RegII => Some(synthetic_vix(snap, bundle.features.horizon_days, &bundle.vix)?),
    };
    let w = index_builder::daily_weights(&bundle.model, &bundle.normalizer, &row, snap, bundle.mode, vix.as_ref())?;
    let check = index_builder::replication_check(&w, snap, w.forecast)?;
    if !check.passed() {
        return Err(Error::Usage(format!("replication residual {} exceeds {}", check.residual, check.tolerance)));
    }
    emit(&a.out, &index_builder::weights_csv(std::slice::from_ref(&w)))
}

const TABLE_ROWS: [usize; 4] = [21, 41, 61, 81];
const TABLE_COLS: [(&str, &str); 5] = [("vix", "VIX*²"), ("linear", "Linear"), ("ridge", "Ridge"), ("forest", "RF"), ("fnn", "FNN")];

fn collect_summaries(dir: &Path, out: &mut Vec<(String, String, usize, f64)>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir).map_err(io(dir))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_summaries(&p, out)?;
            continue;
        }
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name != "summary.csv" && name != "benchmark.csv" {
            continue;
        }
        let text = read(&p)?;
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let parsed = match f.as_slice() {
                [a, m, n, r] => n.parse().ok().zip(r.parse().ok()).map(|(n, r)| (a.to_string(), m.to_string(), n, r)),
                _ => None,
            };
            out.push(parsed.ok_or_else(|| Error::Usage(format!("{}: bad summary line '{line}'", p.display())))?);
        }
    }
    Ok(())
}

/// One table per mode found: rows are option counts (the standard four plus
/// any others present), columns the benchmark
/// and the four regressors.
pub fn render_report(summaries: &[(String, String, usize, f64)]) -> String {
    let mut modes: Vec<&str> = summaries.iter().filter(|s| s.0 != "vix").map(|s| s.1.as_str()).collect();
    modes.sort();
    modes.dedup();
    if modes.is_empty() {
        modes.push("reg1");
    }
    let cell = |algo: &str, mode: &str, n: usize| {
        summaries
            .iter()
            .rev()
            .find(|s| s.0 == algo && s.2 == n && (algo == "vix" || s.1 == mode))
            .map_or("-".to_string(), |s| format!("{:.4}", s.3))
    };
    let mut rows: Vec<usize> = TABLE_ROWS.iter().copied().chain(summaries.iter().map(|s| s.2)).collect();
    rows.sort_unstable();
    rows.dedup();
    let mut out = String::new();
    for mode in modes {
        let _ = writeln!(out, "OOS R² ({mode})");
        let _ = write!(out, "{:>8}", "options");
        for (_, title) in TABLE_COLS {
            let _ = write!(out, " {title:>9}");
        }
        out.push('\n');
        for &n in &rows {
            let _ = write!(out, "{n:>8}");
            for (algo, _) in TABLE_COLS {
                let _ = write!(out, " {:>9}", cell(algo, mode, n));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut summaries = Vec::new();
    for dir in &a.runs {
        collect_summaries(dir, &mut summaries)?;
    }
    emit(&a.out, &render_report(&summaries))
}

/// Loads a bundle and recomputes the forecast it would make on `date`.
pub fn bundle_forecast(bundle: &Bundle, date: NaiveDate) -> Result<f64> {
    let market = market_data::load_market(&bundle.data)?;
    let snap = market
        .chains
        .iter()
        .find(|s| s.quote_date == date)
        .ok_or(IndexBuilderError::MissingSnapshot(date))?;
    let row = crate::features::option_features(snap, &bundle.features)?;
    let x = bundle.normalizer.apply_values(&row.values)?;
    let out = bundle.model.predict(&x)?;
    Ok(match bundle.mode {
        Mode::RegI => out,
        Mode::RegII => bundle.mode.reconstruct(out, synthetic_vix(snap, bundle.features.horizon_days, &bundle.vix)?.vix_star_sq()),
    })
}
