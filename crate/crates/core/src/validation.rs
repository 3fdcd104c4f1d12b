//! Walk-forward out-of-sample evaluation.
//!
//! The first `initial` observations seed the training set; thereafter the
//! model is retrained every `step` observations on everything seen so far,
//! minus a purge of `horizon` rows whose forward target windows would reach
//! into the test block.

use std::fmt::Write as _;
use std::ops::Range;

use chrono::NaiveDate;
use thiserror::Error;

use crate::features::{build_dataset, FeatureConfig, FeatureError, FeatureRow, Normalizer, SkippedDate};
use crate::market_data::MarketData;
use crate::regressors::{Algorithm, Hyper, RegressionModel, RegressorError, TrainConfig};
use crate::targets::{build_targets, Mode, TargetError};
use crate::vix::{synthetic_vix, VixConfig, VixResult};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("{n_obs} observations cannot hold an initial window of {initial} plus a {step}-step test block")]
    TooFewObservations { n_obs: usize, initial: usize, step: usize },
    #[error("purge {purge} must not exceed the initial window {initial}")]
    PurgeTooLong { purge: usize, initial: usize },
    #[error("step must be positive")]
    ZeroStep,
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("need at least two predictions of equal length, got {actuals} actuals and {preds} predictions")]
    Length { actuals: usize, preds: usize },
    #[error("actuals are constant; R² is undefined")]
    ZeroDenominator,
    #[error("tuning split leaves {0} fitting rows")]
    InnerSplit(usize),
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: Box<ValidationError> },
    #[error(transparent)]
    Regressor(#[from] RegressorError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, ValidationError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub fold: usize,
    /// Rows the model is fitted on (already purged).
    pub train: Range<usize>,
    /// Rows dropped from the end of the training window.
    pub purge: Range<usize>,
    pub test: Range<usize>,
}

/// Expanding-window folds. The last block may be shorter than `step`.
pub fn rolling_splits(n_obs: usize, initial: usize, step: usize, purge: usize) -> Result<Vec<FoldPlan>> {
    if step == 0 {
        return Err(ValidationError::ZeroStep);
    }
    if n_obs <= initial + step {
        return Err(ValidationError::TooFewObservations { n_obs, initial, step });
    }
    if purge > initial {
        return Err(ValidationError::PurgeTooLong { purge, initial });
    }
    let mut out = Vec::new();
    let mut start = initial;
    while start < n_obs {
        let end = (start + step).min(n_obs);
        out.push(FoldPlan { fold: out.len(), train: 0..start - purge, purge: start - purge..start, test: start..end });
        start = end;
    }
    Ok(out)
}

/// `1 - Σ(y - p)² / Σ(y - ȳ)²` with `ȳ` the mean of the pooled actuals.
pub fn oos_r2(actuals: &[f64], preds: &[f64]) -> Result<f64> {
    if actuals.len() != preds.len() || actuals.len() < 2 {
        return Err(ValidationError::Length { actuals: actuals.len(), preds: preds.len() });
    }
    let mean = actuals.iter().sum::<f64>() / actuals.len() as f64;
    let ss_tot: f64 = actuals.iter().map(|y| (y - mean) * (y - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(ValidationError::ZeroDenominator);
    }
    let ss_res: f64 = actuals.iter().zip(preds).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// One dated observation: features, the day's index, and the realized
/// variance over the following horizon.
#[derive(Debug, Clone)]
pub struct Sample {
    pub date: NaiveDate,
    pub features: FeatureRow,
    pub vix: VixResult,
    pub realized_var: f64,
}

impl Sample {
    pub fn vix_star_sq(&self) -> f64 {
        self.vix.vix_star_sq()
    }

    pub fn target(&self, mode: Mode) -> f64 {
        match mode {
            Mode::RegI => self.realized_var,
            Mode::RegII => self.realized_var - self.vix_star_sq(),
        }
    }
}

/// Joins features, the synthetic index and forward realized variance by
/// date. Days where any piece is unavailable are reported, not filled.
pub fn build_samples(
    market: &MarketData,
    features: &FeatureConfig,
    vix: &VixConfig,
) -> Result<(Vec<Sample>, Vec<SkippedDate>)> {
    let horizon = usize::try_from(features.horizon_days).map_err(|_| TargetError::ZeroHorizon)?;
    let (rows, mut skipped) = build_dataset(&market.chains, &market.prices, features);
    let mut by_date = std::collections::HashMap::new();
    for snap in &market.chains {
        by_date.insert(snap.quote_date, snap);
    }
    let mut joined = Vec::with_capacity(rows.len());
    for row in rows {
        let snap = by_date[&row.date];
        match synthetic_vix(snap, features.horizon_days, vix) {
            Ok(v) => joined.push((row, v)),
            Err(e) => skipped.push(SkippedDate { date: row.date, reason: e.to_string() }),
        }
    }
    let series: Vec<(NaiveDate, f64)> = joined.iter().map(|(r, v)| (r.date, v.vix_star_sq())).collect();
    let targets = build_targets(&market.prices, &series, Mode::RegI, horizon)?;
    let mut samples = Vec::with_capacity(targets.len());
    let mut t = targets.iter().peekable();
    for (row, v) in joined {
        match t.peek() {
            Some(tr) if tr.date == row.date => {
                samples.push(Sample { date: row.date, realized_var: tr.realized_var, vix: v, features: row });
                t.next();
            }
            _ => skipped.push(SkippedDate { date: row.date, reason: "no complete forward window".into() }),
        }
    }
    skipped.sort_by_key(|s| s.date);
    Ok((samples, skipped))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub initial: usize,
    pub step: usize,
    /// Target horizon in observations; also the purge length.
    pub horizon: usize,
    /// Share of the training rows used for fitting during tuning.
    pub tune_fraction: f64,
    pub train: TrainConfig,
    /// Shift network targets by their training minimum in the
    /// variance-premium mode (the output ReLU would otherwise clamp them).
    pub shift_reg2_targets: bool,
    /// Worker threads for folds; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            initial: 1000,
            step: 30,
            horizon: 30,
            tune_fraction: 0.8,
            train: TrainConfig::default(),
            shift_reg2_targets: true,
            jobs: None,
        }
    }
}

impl BacktestConfig {
    fn train_for(&self, mode: Mode) -> TrainConfig {
        TrainConfig { shift_targets: mode == Mode::RegII && self.shift_reg2_targets, ..self.train.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub date: NaiveDate,
    /// Realized variance.
    pub actual: f64,
    /// Forecast on the variance scale.
    pub pred: f64,
    pub vix_star_sq: f64,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub plan: FoldPlan,
    pub hyper: Hyper,
    pub predictions: Vec<Prediction>,
    /// Fitted model and its feature normalizer; absent for the benchmark.
    pub model: Option<(RegressionModel, Normalizer)>,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub algorithm: String,
    pub mode: Mode,
    /// Option features per day.
    pub n_options: usize,
    pub folds: Vec<FoldResult>,
    pub oos_r2: f64,
    /// Per-day portfolio summaries, filled in by the index builder for
    /// piecewise-linear models.
    pub weight_summaries: Vec<crate::index_builder::DailyLiquidity>,
}

impl BacktestReport {
    pub fn predictions(&self) -> impl Iterator<Item = (usize, &Prediction)> + '_ {
        self.folds.iter().flat_map(|f| f.predictions.iter().map(move |p| (f.plan.fold, p)))
    }

    pub fn recompute_r2(&self) -> Result<f64> {
        let (a, p): (Vec<f64>, Vec<f64>) = self.predictions().map(|(_, p)| (p.actual, p.pred)).unzip();
        oos_r2(&a, &p)
    }

    /// `date,actual,pred,fold,hyperparam`
    pub fn predictions_csv(&self) -> String {
        let mut out = String::from("date,actual,pred,fold,hyperparam\n");
        for f in &self.folds {
            for p in &f.predictions {
                let _ = writeln!(out, "{},{},{},{},{}", p.date, p.actual, p.pred, f.plan.fold, f.hyper);
            }
        }
        out
    }

    /// `algorithm,mode,n_options,oos_r2`
    pub fn summary_csv(&self) -> String {
        format!("algorithm,mode,n_options,oos_r2\n{},{},{},{}\n", self.algorithm, self.mode, self.n_options, self.oos_r2)
    }
}

fn design(rows: &[Sample], norm: &Normalizer) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|s| norm.apply_values(&s.features.values).map_err(Into::into)).collect()
}

fn fit_and_predict(
    algo: Algorithm,
    hyper: Hyper,
    fit_rows: &[Sample],
    eval_rows: &[Sample],
    mode: Mode,
    train: &TrainConfig,
) -> Result<(Vec<f64>, RegressionModel, Normalizer)> {
    let norm = Normalizer::fit(fit_rows.iter().map(|s| s.features.values.as_slice()))?;
    let xs = design(fit_rows, &norm)?;
    let ys: Vec<f64> = fit_rows.iter().map(|s| s.target(mode)).collect();
    let model = RegressionModel::fit(algo, hyper, &xs, &ys, train)?;
    let mut preds = Vec::with_capacity(eval_rows.len());
    for s in eval_rows {
        let x = norm.apply_values(&s.features.values)?;
        preds.push(mode.reconstruct(model.predict(&x)?, s.vix_star_sq()));
    }
    Ok((preds, model, norm))
}

/// Picks the grid value with the best R² on the last `1 - tune_fraction` of
/// the training rows, fitting on the earlier rows minus a purge. Ties go to
/// the more strongly regularised value.
pub fn tune(
    algo: Algorithm,
    grid: &[Hyper],
    train_rows: &[Sample],
    mode: Mode,
    cfg: &BacktestConfig,
) -> Result<Hyper> {
    match grid {
        [] => return Err(ValidationError::EmptyGrid),
        [only] => return Ok(*only),
        _ => {}
    }
    let split = (train_rows.len() as f64 * cfg.tune_fraction).floor() as usize;
    let fit_end = split.saturating_sub(cfg.horizon);
    if fit_end < 2 || split >= train_rows.len() {
        return Err(ValidationError::InnerSplit(fit_end));
    }
    let fit_rows = &train_rows[..fit_end];
    let eval_rows = &train_rows[split..];
    let actuals: Vec<f64> = eval_rows.iter().map(|s| s.realized_var).collect();
    let train = cfg.train_for(mode);
    let mut best: Option<(f64, Hyper)> = None;
    for &h in grid {
        let (preds, ..) = fit_and_predict(algo, h, fit_rows, eval_rows, mode, &train)?;
        let score = oos_r2(&actuals, &preds).unwrap_or(f64::NEG_INFINITY);
        let score = if score.is_nan() { f64::NEG_INFINITY } else { score };
        let better = match best {
            None => true,
            Some((s, bh)) => score > s || (score == s && h.strength() > bh.strength()),
        };
        if better {
            best = Some((score, h));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

fn run_fold(samples: &[Sample], plan: &FoldPlan, algo: Algorithm, mode: Mode, cfg: &BacktestConfig) -> Result<FoldResult> {
    let train_rows = &samples[plan.train.clone()];
    let test_rows = &samples[plan.test.clone()];
    let hyper = tune(algo, &algo.grid(), train_rows, mode, cfg)?;
    let (preds, model, norm) = fit_and_predict(algo, hyper, train_rows, test_rows, mode, &cfg.train_for(mode))?;
    let predictions = test_rows
        .iter()
        .zip(preds)
        .map(|(s, pred)| Prediction { date: s.date, actual: s.realized_var, pred, vix_star_sq: s.vix_star_sq() })
        .collect();
    Ok(FoldResult { plan: plan.clone(), hyper, predictions, model: Some((model, norm)) })
}

fn n_options(samples: &[Sample]) -> usize {
    samples.first().map_or(0, |s| s.features.option_feature_count())
}

fn assemble(algorithm: String, mode: Mode, n_options: usize, folds: Vec<FoldResult>) -> Result<BacktestReport> {
    let mut report = BacktestReport { algorithm, mode, n_options, folds, oos_r2: f64::NAN, weight_summaries: Vec::new() };
    report.oos_r2 = report.recompute_r2()?;
    Ok(report)
}

pub fn run_backtest(samples: &[Sample], algo: Algorithm, mode: Mode, cfg: &BacktestConfig) -> Result<BacktestReport> {
    use rayon::prelude::*;
    let plans = rolling_splits(samples.len(), cfg.initial, cfg.step, cfg.horizon)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| ValidationError::Pool(e.to_string()))?;
    let folds: Vec<Result<FoldResult>> = pool.install(|| {
        plans
            .par_iter()
            .map(|p| {
                run_fold(samples, p, algo, mode, cfg)
                    .map_err(|e| ValidationError::Fold { fold: p.fold, source: Box::new(e) })
            })
            .collect()
    });
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;
    assemble(algo.name().to_string(), mode, n_options(samples), folds)
}

/// The squared index itself as a forecast, scored on the same folds.
pub fn run_vix_benchmark(samples: &[Sample], cfg: &BacktestConfig) -> Result<BacktestReport> {
    let plans = rolling_splits(samples.len(), cfg.initial, cfg.step, cfg.horizon)?;
    let folds = plans
        .into_iter()
        .map(|plan| {
            let predictions = samples[plan.test.clone()]
                .iter()
                .map(|s| Prediction { date: s.date, actual: s.realized_var, pred: s.vix_star_sq(), vix_star_sq: s.vix_star_sq() })
                .collect();
            FoldResult { plan, hyper: Hyper::None, predictions, model: None }
        })
        .collect();
    assemble("vix".to_string(), Mode::RegI, n_options(samples), folds)
}
