//! Regression targets: forward realized variance, directly or as its
//! deviation from the squared synthetic index.

use std::fmt;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::PriceSeries;

/// Trading days per year; daily realized variance is scaled by this factor so
/// it shares the annualized scale of the squared index.
pub const ANNUALIZATION: f64 = 252.0;

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("insufficient forward data at index {index}: need {horizon} more observations")]
    InsufficientForwardData { index: usize, horizon: usize },
    #[error("index date {0} not found in price series")]
    Misaligned(NaiveDate),
    #[error("horizon must be positive")]
    ZeroHorizon,
}

pub type Result<T> = std::result::Result<T, TargetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Predict realized variance directly.
    #[serde(rename = "reg1")]
    RegI,
    /// Predict realized variance minus the squared index.
    #[serde(rename = "reg2")]
    RegII,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::RegI => "reg1",
            Mode::RegII => "reg2",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "reg1" => Ok(Mode::RegI),
            "reg2" => Ok(Mode::RegII),
            other => Err(format!("unknown mode {other:?} (expected reg1 or reg2)")),
        }
    }
}

impl Mode {
    /// Maps a model output back to the variance scale.
    pub fn reconstruct(self, output: f64, vix_star_sq: f64) -> f64 {
        match self {
            Mode::RegI => output,
            Mode::RegII => output + vix_star_sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRow {
    pub date: NaiveDate,
    pub horizon_days: usize,
    /// Annualized realized variance over the next `horizon_days` observations.
    pub realized_var: f64,
    pub vix_star_sq: f64,
    pub mode: Mode,
    pub target: f64,
}

/// `(1/n) Σ (r - r̄)²`.
pub fn demeaned_variance(returns: &[f64]) -> f64 {
    if returns.is_empty() {
        return 0.0;
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n
}

/// Daily (non-annualized) variance of the `horizon` returns after index `t`.
pub fn realized_variance(prices: &PriceSeries, t: usize, horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(TargetError::ZeroHorizon);
    }
    if t + horizon >= prices.len() {
        return Err(TargetError::InsufficientForwardData { index: t, horizon });
    }
    let returns: Vec<f64> = (1..=horizon).map(|i| prices.simple_return(t + i)).collect();
    Ok(demeaned_variance(&returns))
}

/// Targets for every index date with a full forward window; dates without
/// one are dropped.
pub fn build_targets(
    prices: &PriceSeries,
    vix_series: &[(NaiveDate, f64)],
    mode: Mode,
    horizon: usize,
) -> Result<Vec<TargetRow>> {
    let mut out = Vec::with_capacity(vix_series.len());
    for &(date, vix_star_sq) in vix_series {
        let t = prices.index_of(date).ok_or(TargetError::Misaligned(date))?;
        if t + horizon >= prices.len() {
            continue;
        }
        let realized_var = ANNUALIZATION * realized_variance(prices, t, horizon)?;
        let target = match mode {
            Mode::RegI => realized_var,
            Mode::RegII => realized_var - vix_star_sq,
        };
        out.push(TargetRow { date, horizon_days: horizon, realized_var, vix_star_sq, mode, target });
    }
    Ok(out)
}

pub fn targets_csv(rows: &[TargetRow]) -> String {
    let mut out = String::from("date,realized_var,vix_star_sq,target,mode\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.date, r.realized_var, r.vix_star_sq, r.target, r.mode);
    }
    out
}
