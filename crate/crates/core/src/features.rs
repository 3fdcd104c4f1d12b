//! Daily feature rows built from option mids, with the exact affine map from
//! raw quotes to each feature value.
//!
//! A feature slot `h` holds the option at grid strike `K_h = K0 + h·step·ΔK`
//! (put below `K0`, call above, put/call average at `K0`), gap-filled in strike
//! per expiry, interpolated linearly in maturity to the horizon and divided by
//! `K_h²`. Every step is linear in the raw mids, so the composition is
//! recorded as an [`AffineMap`] and re-checked against the snapshot.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{ChainSnapshot, OptionKind, OptionQuote, PriceSeries, QuoteKey, DAYS_PER_YEAR};
use crate::vix::{self, TermChoice, VixError};

/// Tolerance for the affine self-check, absolute.
pub const AFFINE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("horizon {t} outside maturity bracket [{t1}, {t2}]")]
    OutsideBracket { t: f64, t1: f64, t2: f64 },
    #[error("no quotes to fill strike {strike} ({kind}) at expiry {expiry}")]
    NoDonors { strike: f64, kind: OptionKind, expiry: NaiveDate },
    #[error("insufficient history at index {index}: need {need} prior observations")]
    InsufficientHistory { index: usize, need: usize },
    #[error("constant feature {0} in training rows")]
    ConstantFeature(usize),
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("affine map mismatch on feature {feature}: {got} vs stored {stored}")]
    AffineMismatch { feature: usize, got: f64, stored: f64 },
    #[error("missing quote {0} for affine map")]
    MissingQuote(QuoteKey),
    #[error(transparent)]
    Vix(#[from] VixError),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub horizon_days: i64,
    /// `n`; the grid holds `2n + 1` strikes.
    pub strikes_per_side: usize,
    /// Grid step in units of the base strike spacing (1 = consecutive strikes).
    pub strike_step: usize,
    pub include_returns_features: bool,
    pub return_lookbacks: Vec<usize>,
    pub variance_lookbacks: Vec<usize>,
    /// Listed strike spacing; inferred from the near expiry when `None`.
    pub base_spacing: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            horizon_days: 30,
            strikes_per_side: 10,
            strike_step: 1,
            include_returns_features: false,
            return_lookbacks: vec![1, 5, 15, 30, 60, 90],
            variance_lookbacks: vec![15, 30, 60, 90],
            base_spacing: None,
        }
    }
}

impl FeatureConfig {
    pub fn option_feature_count(&self) -> usize {
        2 * self.strikes_per_side + 1
    }

    pub fn feature_count(&self) -> usize {
        let extra = if self.include_returns_features {
            self.return_lookbacks.len() + self.variance_lookbacks.len()
        } else {
            0
        };
        self.option_feature_count() + extra
    }
}

/// `Σ coefficient·mid(key) + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearForm {
    pub terms: Vec<(QuoteKey, f64)>,
    pub constant: f64,
}

impl LinearForm {
    pub fn eval(&self, snapshot: &ChainSnapshot) -> Result<f64> {
        let mut acc = self.constant;
        for (key, c) in &self.terms {
            let q = snapshot.get(key).ok_or(FeatureError::MissingQuote(*key))?;
            acc += c * q.mid;
        }
        Ok(acc)
    }

    fn scaled(&self, c: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(k, w)| (*k, w * c)).collect(),
            constant: self.constant * c,
        }
    }

    fn add_scaled(&mut self, other: &LinearForm, c: f64) {
        for (k, w) in &other.terms {
            match self.terms.iter_mut().find(|(key, _)| key == k) {
                Some(entry) => entry.1 += w * c,
                None => self.terms.push((*k, w * c)),
            }
        }
        self.constant += other.constant * c;
    }
}

/// Affine maps of the option features of a row, one per option slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AffineMap {
    pub features: Vec<LinearForm>,
}

impl AffineMap {
    pub fn apply(&self, snapshot: &ChainSnapshot) -> Result<Vec<f64>> {
        self.features.iter().map(|f| f.eval(snapshot)).collect()
    }

    /// Checks that the map reproduces `values` (option slots only).
    pub fn verify(&self, snapshot: &ChainSnapshot, values: &[f64]) -> Result<()> {
        for (i, form) in self.features.iter().enumerate() {
            let got = form.eval(snapshot)?;
            if !((got - values[i]).abs() <= AFFINE_TOL) {
                return Err(FeatureError::AffineMismatch { feature: i, got, stored: values[i] });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub date: NaiveDate,
    /// Option features first, then returns features if enabled.
    pub values: Vec<f64>,
    pub strike_grid: Vec<f64>,
    pub affine: AffineMap,
}

impl FeatureRow {
    pub fn option_feature_count(&self) -> usize {
        self.affine.features.len()
    }

    /// True when every feature is an option feature, i.e. the row is tradable.
    pub fn is_tradable(&self) -> bool {
        self.values.len() == self.affine.features.len()
    }
}

/// Linear interpolation in maturity between the two bracketing expiries.
pub fn interpolate_tenor(q1: f64, q2: f64, t1: f64, t2: f64, t: f64) -> Result<f64> {
    let (w1, w2) = tenor_weights(t1, t2, t)?;
    Ok(q1 * w1 + q2 * w2)
}

pub fn tenor_weights(t1: f64, t2: f64, t: f64) -> Result<(f64, f64)> {
    if !(t1 < t2) || t < t1 || t > t2 {
        return Err(FeatureError::OutsideBracket { t, t1, t2 });
    }
    Ok(((t2 - t) / (t2 - t1), (t - t1) / (t2 - t1)))
}

/// `{K0 + i·step·spacing : i = -n..=n}`.
pub fn build_strike_grid(k0: f64, n: usize, base_spacing: f64, step: usize) -> Vec<f64> {
    let n = n as i64;
    (-n..=n).map(|i| k0 + (i * step as i64) as f64 * base_spacing).collect()
}

/// Donor weights for filling `target` from quoted `strikes` (ascending):
/// exact match, else linear between the nearest quoted strikes below and
/// above, else the single nearest strike when only one side is quoted.
pub fn fill_weights(target: f64, strikes: &[f64]) -> Option<Vec<(usize, f64)>> {
    if strikes.is_empty() {
        return None;
    }
    let tol = 1e-9 * target.abs().max(1.0);
    let above = strikes.partition_point(|k| *k < target - tol);
    if above < strikes.len() && (strikes[above] - target).abs() <= tol {
        return Some(vec![(above, 1.0)]);
    }
    match (above.checked_sub(1), (above < strikes.len()).then_some(above)) {
        (Some(lo), Some(hi)) => {
            let (kl, kh) = (strikes[lo], strikes[hi]);
            let wh = (target - kl) / (kh - kl);
            Some(vec![(lo, 1.0 - wh), (hi, wh)])
        }
        (Some(lo), None) => Some(vec![(lo, 1.0)]),
        (None, Some(hi)) => Some(vec![(hi, 1.0)]),
        (None, None) => None,
    }
}

/// Fills a missing mid at `strike` from `(strike, mid)` donors sorted by strike.
pub fn fill_missing(strike: f64, donors: &[(f64, f64)]) -> Option<f64> {
    let strikes: Vec<f64> = donors.iter().map(|d| d.0).collect();
    fill_weights(strike, &strikes).map(|w| w.iter().map(|(i, c)| c * donors[*i].1).sum())
}

pub fn prescale(mid: f64, strike: f64) -> f64 {
    mid / (strike * strike)
}

fn fill_form(side: &[OptionQuote], strike: f64, kind: OptionKind, expiry: NaiveDate) -> Result<LinearForm> {
    let strikes: Vec<f64> = side.iter().map(|q| q.strike).collect();
    let weights = fill_weights(strike, &strikes).ok_or(FeatureError::NoDonors { strike, kind, expiry })?;
    Ok(LinearForm {
        terms: weights.into_iter().map(|(i, w)| (side[i].key(), w)).collect(),
        constant: 0.0,
    })
}

fn fill_value(side: &[OptionQuote], strike: f64, kind: OptionKind, expiry: NaiveDate) -> Result<f64> {
    let donors: Vec<(f64, f64)> = side.iter().map(|q| (q.strike, q.mid)).collect();
    fill_missing(strike, &donors).ok_or(FeatureError::NoDonors { strike, kind, expiry })
}

/// Slot form and value for one expiry: put below `K0`, call above, average at `K0`.
fn slot(snapshot: &ChainSnapshot, expiry: NaiveDate, strike: f64, offset: i64) -> Result<(LinearForm, f64)> {
    let kinds: &[OptionKind] = match offset.signum() {
        -1 => &[OptionKind::Put],
        1 => &[OptionKind::Call],
        _ => &[OptionKind::Put, OptionKind::Call],
    };
    let share = 1.0 / kinds.len() as f64;
    let mut form = LinearForm::default();
    let mut value = 0.0;
    for &kind in kinds {
        let side = snapshot.side(expiry, kind);
        form.add_scaled(&fill_form(side, strike, kind, expiry)?, share);
        value += share * fill_value(side, strike, kind, expiry)?;
    }
    Ok((form, value))
}

fn base_spacing(snapshot: &ChainSnapshot, expiry: NaiveDate, cfg: &FeatureConfig) -> f64 {
    cfg.base_spacing.unwrap_or_else(|| {
        snapshot
            .strikes(expiry)
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    })
}

/// Option features for one snapshot, without returns features.
pub fn option_features(snapshot: &ChainSnapshot, cfg: &FeatureConfig) -> Result<FeatureRow> {
    let choice = vix::choose_terms(snapshot, cfg.horizon_days)?;
    let (expiries, weights) = match choice {
        TermChoice::Single(e) => (vec![e], vec![1.0]),
        TermChoice::Pair(e1, e2) => {
            let t = cfg.horizon_days as f64 / DAYS_PER_YEAR;
            let t1 = snapshot.tenor_days(e1) as f64 / DAYS_PER_YEAR;
            let t2 = snapshot.tenor_days(e2) as f64 / DAYS_PER_YEAR;
            let (w1, w2) = tenor_weights(t1, t2, t)?;
            (vec![e1, e2], vec![w1, w2])
        }
    };
    let near = expiries[0];
    let forward = vix::compute_forward(snapshot, near)?;
    let k0 = vix::find_k0(snapshot, near, forward)?;
    let spacing = base_spacing(snapshot, near, cfg);
    let grid = build_strike_grid(k0, cfg.strikes_per_side, spacing, cfg.strike_step);
    let n = cfg.strikes_per_side as i64;

    let mut forms = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len());
    for (idx, &strike) in grid.iter().enumerate() {
        let offset = idx as i64 - n;
        let mut form = LinearForm::default();
        let mut per_expiry = Vec::with_capacity(expiries.len());
        for (&e, &w) in expiries.iter().zip(&weights) {
            let (f, v) = slot(snapshot, e, strike, offset)?;
            form.add_scaled(&f, w);
            per_expiry.push(v);
        }
        let interpolated = match per_expiry.as_slice() {
            [v] => *v,
            [v1, v2] => v1 * weights[0] + v2 * weights[1],
            _ => unreachable!("one or two expiries"),
        };
        let scale = 1.0 / (strike * strike);
        forms.push(form.scaled(scale));
        values.push(prescale(interpolated, strike));
    }
    let affine = AffineMap { features: forms };
    affine.verify(snapshot, &values)?;
    Ok(FeatureRow { date: snapshot.quote_date, values, strike_grid: grid, affine })
}

/// Trailing returns `(p_t - p_{t-l}) / p_{t-l}` and demeaned variances of the
/// `l` daily returns before `t`.
pub fn returns_features(series: &PriceSeries, index: usize, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let need = cfg
        .return_lookbacks
        .iter()
        .copied()
        .chain(cfg.variance_lookbacks.iter().map(|l| l + 1))
        .max()
        .unwrap_or(0);
    if index < need || index >= series.len() {
        return Err(FeatureError::InsufficientHistory { index, need });
    }
    let p = series.closes();
    let mut out = Vec::with_capacity(cfg.return_lookbacks.len() + cfg.variance_lookbacks.len());
    for &l in &cfg.return_lookbacks {
        out.push((p[index] - p[index - l]) / p[index - l]);
    }
    for &l in &cfg.variance_lookbacks {
        let returns: Vec<f64> = (1..=l).map(|i| series.simple_return(index - i)).collect();
        out.push(crate::targets::demeaned_variance(&returns));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedDate {
    pub date: NaiveDate,
    pub reason: String,
}

/// One row per resolvable date; unresolvable dates are skipped and reported.
pub fn build_dataset(
    chains: &[ChainSnapshot],
    prices: &PriceSeries,
    cfg: &FeatureConfig,
) -> (Vec<FeatureRow>, Vec<SkippedDate>) {
    let mut rows = Vec::with_capacity(chains.len());
    let mut skipped = Vec::new();
    for snap in chains {
        let built = option_features(snap, cfg).and_then(|mut row| {
            if cfg.include_returns_features {
                let index = prices.index_of(snap.quote_date).ok_or(FeatureError::InsufficientHistory {
                    index: usize::MAX,
                    need: 0,
                })?;
                row.values.extend(returns_features(prices, index, cfg)?);
            }
            Ok(row)
        });
        match built {
            Ok(row) => rows.push(row),
            Err(e) => skipped.push(SkippedDate { date: snap.quote_date, reason: e.to_string() }),
        }
    }
    (rows, skipped)
}

/// Per-feature z-score with sample (n - 1) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        if rows.len() < 2 {
            return Err(FeatureError::TooFewRows(rows.len()));
        }
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in &rows {
            if r.len() != d {
                return Err(FeatureError::Dimension { expected: d, got: r.len() });
            }
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in &rows {
            for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / (n - 1.0)).sqrt()).collect();
        if let Some(j) = std.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(FeatureError::ConstantFeature(j));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.dim() {
            return Err(FeatureError::Dimension { expected: self.dim(), got: values.len() });
        }
        Ok(values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    /// Normalizes a row and composes the z-score into its affine map.
    pub fn apply(&self, row: &FeatureRow) -> Result<FeatureRow> {
        let values = self.apply_values(&row.values)?;
        let features = row
            .affine
            .features
            .iter()
            .enumerate()
            .map(|(j, form)| {
                let mut out = form.scaled(1.0 / self.std[j]);
                out.constant -= self.mean[j] / self.std[j];
                out
            })
            .collect();
        Ok(FeatureRow {
            date: row.date,
            values,
            strike_grid: row.strike_grid.clone(),
            affine: AffineMap { features },
        })
    }
}

/// `date,f0,f1,...` with one line per row.
pub fn features_csv(rows: &[FeatureRow]) -> String {
    let width = rows.first().map_or(0, |r| r.values.len());
    let mut out = String::from("date");
    for j in 0..width {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}", r.date);
        for v in &r.values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// `feature_index,expiry,strike,kind,coefficient,constant`, terms sorted by quote.
pub fn affine_csv(map: &AffineMap) -> String {
    let mut out = String::from("feature_index,expiry,strike,kind,coefficient,constant\n");
    for (j, form) in map.features.iter().enumerate() {
        let sorted: BTreeMap<QuoteKey, f64> = form.terms.iter().copied().collect();
        for (k, c) in sorted {
            let _ = writeln!(out, "{j},{},{},{},{c},{}", k.expiry, k.strike, k.kind, form.constant);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tenor_interpolation_examples() {
        assert_eq!(interpolate_tenor(7.5, 7.5, 25.0, 35.0, 31.3).unwrap(), 7.5);
        assert_eq!(interpolate_tenor(4.0, 8.0, 25.0, 35.0, 25.0).unwrap(), 4.0);
        assert!((interpolate_tenor(4.0, 8.0, 25.0, 35.0, 30.0).unwrap() - 6.0).abs() < 1e-15);
        assert!(interpolate_tenor(4.0, 8.0, 25.0, 35.0, 40.0).is_err());
    }

    #[test]
    fn grid_examples() {
        assert_eq!(build_strike_grid(2000.0, 2, 5.0, 1), vec![1990.0, 1995.0, 2000.0, 2005.0, 2010.0]);
        assert_eq!(build_strike_grid(2000.0, 0, 5.0, 1), vec![2000.0]);
        assert_eq!(build_strike_grid(2000.0, 2, 5.0, 2), vec![1980.0, 1990.0, 2000.0, 2010.0, 2020.0]);
    }

    #[test]
    fn fill_examples() {
        assert_eq!(fill_missing(1995.0, &[(1990.0, 6.0), (2000.0, 4.0)]), Some(5.0));
        assert_eq!(fill_missing(2000.0, &[(1990.0, 6.0), (2000.0, 4.0)]), Some(4.0));
        let v = fill_missing(1995.0, &[(1985.0, 8.0), (2000.0, 2.0)]).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        assert_eq!(fill_missing(2010.0, &[(1990.0, 6.0), (2000.0, 4.0)]), Some(4.0));
        assert_eq!(fill_missing(2010.0, &[]), None);
    }

    #[test]
    fn prescale_examples() {
        assert_eq!(prescale(10.0, 2000.0), 2.5e-6);
        assert_eq!(prescale(0.0, 2000.0), 0.0);
        assert_eq!(prescale(10.0, 4000.0), prescale(10.0, 2000.0) / 4.0);
    }

    #[test]
    fn two_point_zscore_uses_sample_std() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0], vec![3.0]];
        let norm = Normalizer::fit(rows.iter().map(|r| r.as_slice())).unwrap();
        let a = norm.apply_values(&[1.0]).unwrap()[0];
        let b = norm.apply_values(&[3.0]).unwrap()[0];
        assert!((a + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((b - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(norm.apply_values(&[2.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn normalizer_rejects_constant_and_short_inputs() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![1.0, 3.0]];
        assert!(matches!(
            Normalizer::fit(rows.iter().map(|r| r.as_slice())),
            Err(FeatureError::ConstantFeature(0))
        ));
        let one: Vec<Vec<f64>> = vec![vec![1.0]];
        assert!(matches!(Normalizer::fit(one.iter().map(|r| r.as_slice())), Err(FeatureError::TooFewRows(1))));
    }

    #[test]
    fn five_row_fixture_matches_hand_zscores() {
        // training column {2, 4, 4, 5, 10}: mean 5, sample variance (9+1+1+0+25)/4 = 9
        let train: Vec<Vec<f64>> = [2.0, 4.0, 4.0, 5.0, 10.0].iter().map(|v| vec![*v]).collect();
        let norm = Normalizer::fit(train.iter().map(|r| r.as_slice())).unwrap();
        assert_eq!(norm.mean[0], 5.0);
        assert_eq!(norm.std[0], 3.0);
        for (x, z) in [(8.0, 1.0), (-1.0, -2.0), (5.0, 0.0), (6.5, 0.5)] {
            assert!((norm.apply_values(&[x]).unwrap()[0] - z).abs() < 1e-15);
        }
    }
}
