//! Forecasts as option portfolios.
//!
//! A piecewise-linear model is affine in the normalized features at each
//! input, the normalizer is affine in the raw features, and every raw option
//! feature is affine in quoted mids. Composing the three gives one weight per
//! quote plus a cash constant whose payoff is exactly the forecast.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use thiserror::Error;

use crate::features::{FeatureError, FeatureRow, Normalizer};
use crate::market_data::{ChainSnapshot, QuoteKey};
use crate::regressors::{RegressionModel, RegressorError};
use crate::targets::Mode;
use crate::validation::{BacktestReport, Sample};
use crate::vix::VixResult;

#[derive(Debug, Error)]
pub enum IndexBuilderError {
    #[error(transparent)]
    Regressor(#[from] RegressorError),
    #[error("returns-based features make the forecast non-tradable; disable them to extract weights")]
    ReturnsFeatures,
    #[error("{date}: feature map does not reproduce the stored features ({source})")]
    StaleAffine { date: NaiveDate, source: FeatureError },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{date}: variance-premium weights need the day's index decomposition")]
    MissingVix { date: NaiveDate },
    #[error("{date}: no quote for leg {expiry} {strike} {kind}")]
    MissingQuote { date: NaiveDate, expiry: NaiveDate, strike: f64, kind: String },
    #[error("{0}: no chain snapshot for this date")]
    MissingSnapshot(NaiveDate),
    #[error("fold {0} carries no fitted model")]
    NoModel(usize),
    #[error("weights are for {weights} but snapshot is {snapshot}")]
    DateMismatch { weights: NaiveDate, snapshot: NaiveDate },
}

pub type Result<T> = std::result::Result<T, IndexBuilderError>;

/// Weights are variance units per unit of option mid price.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights {
    pub date: NaiveDate,
    pub mode: Mode,
    /// Model legs, sorted by quote, zero weights dropped.
    pub legs: Vec<(QuoteKey, f64)>,
    pub cash_constant: f64,
    /// Index legs added back in the variance-premium mode.
    pub vix_legs: Vec<(QuoteKey, f64)>,
    /// The index's non-option term `-Σ c_i (1/T_i)(F_i/K0_i - 1)²`.
    pub vix_adjustment: f64,
    /// Model forecast on the variance scale.
    pub forecast: f64,
}

impl PortfolioWeights {
    /// Model and index legs netted per quote.
    pub fn positions(&self) -> BTreeMap<QuoteKey, f64> {
        let mut out = BTreeMap::new();
        for &(k, w) in self.legs.iter().chain(&self.vix_legs) {
            *out.entry(k).or_insert(0.0) += w;
        }
        out.retain(|_, w| *w != 0.0);
        out
    }

    pub fn constant(&self) -> f64 {
        self.cash_constant + self.vix_adjustment
    }
}

fn aggregate(iter: impl IntoIterator<Item = (QuoteKey, f64)>) -> Vec<(QuoteKey, f64)> {
    let mut m: BTreeMap<QuoteKey, f64> = BTreeMap::new();
    for (k, w) in iter {
        *m.entry(k).or_insert(0.0) += w;
    }
    m.into_iter().filter(|(_, w)| *w != 0.0).collect()
}

/// Expands the forecast for `row` into option weights. `row` holds the raw
/// (un-normalized) features of `snapshot`.
pub fn daily_weights(
    model: &RegressionModel,
    normalizer: &Normalizer,
    row: &FeatureRow,
    snapshot: &ChainSnapshot,
    mode: Mode,
    vix: Option<&VixResult>,
) -> Result<PortfolioWeights> {
    if !row.is_tradable() {
        return Err(IndexBuilderError::ReturnsFeatures);
    }
    row.affine
        .verify(snapshot, &row.values)
        .map_err(|source| IndexBuilderError::StaleAffine { date: row.date, source })?;
    let z = normalizer.apply(row)?;
    let local = model.local_affine(&z.values)?;
    let output = model.predict(&z.values)?;

    let mut cash = local.constant;
    let mut terms = Vec::new();
    for (c, form) in local.coefficients.iter().zip(&z.affine.features) {
        if *c == 0.0 {
            continue;
        }
        cash += c * form.constant;
        terms.extend(form.terms.iter().map(|&(k, w)| (k, c * w)));
    }

    let (vix_legs, vix_adjustment, forecast) = match mode {
        Mode::RegI => (Vec::new(), 0.0, output),
        Mode::RegII => {
            let v = vix.ok_or(IndexBuilderError::MissingVix { date: row.date })?;
            let (legs, adj) = v.legs();
            (aggregate(legs), adj, mode.reconstruct(output, v.vix_star_sq()))
        }
    };
    Ok(PortfolioWeights { date: row.date, mode, legs: aggregate(terms), cash_constant: cash, vix_legs, vix_adjustment, forecast })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    /// Portfolio value at the snapshot's mids.
    pub value: f64,
    pub residual: f64,
    pub tolerance: f64,
}

impl Replication {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

/// Prices the portfolio at the snapshot's mids and compares with `forecast`.
pub fn replication_check(weights: &PortfolioWeights, snapshot: &ChainSnapshot, forecast: f64) -> Result<Replication> {
    if weights.date != snapshot.quote_date {
        return Err(IndexBuilderError::DateMismatch { weights: weights.date, snapshot: snapshot.quote_date });
    }
    let mut value = weights.cash_constant + weights.vix_adjustment;
    for &(k, w) in weights.legs.iter().chain(&weights.vix_legs) {
        let q = snapshot.get(&k).ok_or_else(|| IndexBuilderError::MissingQuote {
            date: snapshot.quote_date,
            expiry: k.expiry,
            strike: k.strike,
            kind: k.kind.to_string(),
        })?;
        value += w * q.mid;
    }
    let residual = (value - forecast).abs();
    Ok(Replication { value, residual, tolerance: 1e-8 * forecast.abs().max(1.0) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyLiquidity {
    pub date: NaiveDate,
    pub n_legs: usize,
    /// Legs whose |weight| exceeds the materiality threshold.
    pub n_material: usize,
    /// `Σ|w_t - w_{t-1}|` over the union of quotes, missing as zero; `None`
    /// on the first day.
    pub turnover: Option<f64>,
    pub cash: f64,
    pub adjustment: f64,
}

/// Turnover between two position sets keyed by exact quote.
pub fn turnover(prev: &BTreeMap<QuoteKey, f64>, cur: &BTreeMap<QuoteKey, f64>) -> f64 {
    let mut total = 0.0;
    for (k, w) in cur {
        total += (w - prev.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, w) in prev {
        if !cur.contains_key(k) {
            total += w.abs();
        }
    }
    total
}

pub fn liquidity_report(series: &[PortfolioWeights], materiality: f64) -> Vec<DailyLiquidity> {
    let mut out = Vec::with_capacity(series.len());
    let mut prev: Option<BTreeMap<QuoteKey, f64>> = None;
    for w in series {
        let pos = w.positions();
        out.push(DailyLiquidity {
            date: w.date,
            n_legs: pos.len(),
            n_material: pos.values().filter(|v| v.abs() > materiality).count(),
            turnover: prev.as_ref().map(|p| turnover(p, &pos)),
            cash: w.cash_constant,
            adjustment: w.vix_adjustment,
        });
        prev = Some(pos);
    }
    out
}

/// `date,expiry,strike,kind,weight`, netted positions.
pub fn weights_csv(series: &[PortfolioWeights]) -> String {
    let mut out = String::from("date,expiry,strike,kind,weight\n");
    for w in series {
        for (k, v) in w.positions() {
            let _ = writeln!(out, "{},{},{},{},{}", w.date, k.expiry, k.strike, k.kind, v);
        }
    }
    out
}

/// `date,n_legs,n_material,turnover,cash,adjustment`
pub fn summary_csv(rows: &[DailyLiquidity]) -> String {
    let mut out = String::from("date,n_legs,n_material,turnover,cash,adjustment\n");
    for r in rows {
        let t = r.turnover.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", r.date, r.n_legs, r.n_material, t, r.cash, r.adjustment);
    }
    out
}

/// Weights and replication results for every out-of-sample day of a
/// backtest, each day using the fold model that produced its forecast.
pub fn portfolio_series(
    report: &BacktestReport,
    samples: &[Sample],
    chains: &[ChainSnapshot],
) -> Result<Vec<(PortfolioWeights, Replication)>> {
    let snaps: BTreeMap<NaiveDate, &ChainSnapshot> = chains.iter().map(|s| (s.quote_date, s)).collect();
    let mut out = Vec::new();
    for fold in &report.folds {
        let (model, norm) = fold.model.as_ref().ok_or(IndexBuilderError::NoModel(fold.plan.fold))?;
        for (s, p) in samples[fold.plan.test.clone()].iter().zip(&fold.predictions) {
            let snap = snaps.get(&s.date).ok_or(IndexBuilderError::MissingSnapshot(s.date))?;
            let w = daily_weights(model, norm, &s.features, snap, report.mode, Some(&s.vix))?;
            let rep = replication_check(&w, snap, p.pred)?;
            out.push((w, rep));
        }
    }
    Ok(out)
}

/// `date,forecast,portfolio,residual,tolerance,ok`
pub fn replication_csv(series: &[(PortfolioWeights, Replication)]) -> String {
    let mut out = String::from("date,forecast,portfolio,residual,tolerance,ok\n");
    for (w, r) in series {
        let _ = writeln!(out, "{},{},{},{},{},{}", w.date, w.forecast, r.value, r.residual, r.tolerance, r.passed());
    }
    out
}
