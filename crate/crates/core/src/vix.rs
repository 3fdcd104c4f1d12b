//! Synthetic VIX-style index for an arbitrary horizon.
//!
//! Each bracketing expiry contributes a model-free implied variance built
//! from out-of-the-money puts and calls around the at-the-money strike `K0`;
//! the two term variances are interpolated linearly in total variance to the
//! requested horizon.

use chrono::NaiveDate;
use thiserror::Error;

use crate::market_data::{ChainSnapshot, MarketDataError, OptionKind, QuoteKey, DAYS_PER_YEAR};

#[derive(Debug, Error)]
pub enum VixError {
    #[error("{date}: no strike quotes both kinds at expiry {expiry}")]
    NoParityStrike { date: NaiveDate, expiry: NaiveDate },
    #[error(transparent)]
    Rate(#[from] MarketDataError),
    #[error("{date}: no listed strike at or below forward {forward} for expiry {expiry}")]
    NoStrikeBelowForward { date: NaiveDate, expiry: NaiveDate, forward: f64 },
    #[error("time to expiry must be positive, got {0} years")]
    NonPositiveTenor(f64),
    #[error("empty option selection")]
    EmptySelection,
    #[error("{date}: no expiries bracket horizon {horizon_days}d")]
    NoBracketingExpiries { date: NaiveDate, horizon_days: i64 },
    #[error("{date}: interpolated variance {variance} is negative")]
    NegativeVariance { date: NaiveDate, variance: f64 },
}

pub type Result<T> = std::result::Result<T, VixError>;

/// How the per-strike width `ΔK` is assigned to each selected strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StrikeWidth {
    /// Half the distance between neighbours, one-sided at the ends.
    #[default]
    HalfNeighbor,
    /// Distance to the next strike up (last strike reuses its lower gap).
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VixConfig {
    pub width: StrikeWidth,
    /// Cap on the OTM options taken each side of `K0`; `None` keeps the full
    /// selection.
    pub max_per_side: Option<usize>,
}

impl VixConfig {
    pub fn with_max_per_side(n: usize) -> Self {
        Self { max_per_side: Some(n), ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectedKind {
    Put,
    Call,
    /// Put and call at `K0`, mids averaged.
    AtTheMoney,
}

/// One strike in a term's selection. `components` lists the quotes whose
/// weighted mids form `mid` (two halves at `K0`, a single quote elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedOption {
    pub strike: f64,
    pub kind: SelectedKind,
    pub mid: f64,
    pub components: Vec<(QuoteKey, f64)>,
    pub delta_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermSelection {
    pub expiry: NaiveDate,
    pub tenor_days: i64,
    /// Time to expiry in years (actual/365).
    pub tau: f64,
    pub rate: f64,
    pub forward: f64,
    pub k0: f64,
    /// Ascending in strike.
    pub selected: Vec<SelectedOption>,
}

impl TermSelection {
    pub fn option_count(&self) -> usize {
        self.selected.iter().map(|s| s.components.len()).sum()
    }

    /// `(2/T) Σ ΔK/K² e^{RT} O(K)`, the option part of the term variance.
    pub fn option_sum(&self) -> Result<f64> {
        if !(self.tau > 0.0) {
            return Err(VixError::NonPositiveTenor(self.tau));
        }
        let growth = (self.rate * self.tau).exp();
        let sum: f64 = self
            .selected
            .iter()
            .map(|s| s.delta_k / (s.strike * s.strike) * growth * s.mid)
            .sum();
        Ok(2.0 / self.tau * sum)
    }

    /// `(1/T)(F/K0 - 1)²`, subtracted from the option sum.
    pub fn forward_adjustment(&self) -> f64 {
        let x = self.forward / self.k0 - 1.0;
        x * x / self.tau
    }
}

/// Which expiries feed the index for a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermChoice {
    Single(NaiveDate),
    Pair(NaiveDate, NaiveDate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VixResult {
    pub date: NaiveDate,
    pub horizon_days: i64,
    /// Index points, i.e. volatility × 100.
    pub value: f64,
    /// Annualized variance at the horizon, `(value/100)²` up to rounding.
    pub variance: f64,
    pub variance_by_term: (f64, Option<f64>),
    pub terms: Vec<TermSelection>,
    /// Coefficients `c_i` with `variance = Σ c_i σ_i²`.
    pub term_coefficients: Vec<f64>,
    pub option_count: usize,
}

impl VixResult {
    /// Per-unit squared index, the benchmark variance forecast.
    pub fn vix_star_sq(&self) -> f64 {
        self.variance
    }

    /// Decomposes `variance` into option weights per quote plus the
    /// non-option forward adjustment.
    pub fn legs(&self) -> (Vec<(QuoteKey, f64)>, f64) {
        let mut legs = Vec::new();
        let mut adjustment = 0.0;
        for (term, &c) in self.terms.iter().zip(&self.term_coefficients) {
            let growth = (term.rate * term.tau).exp();
            for s in &term.selected {
                let w = c * 2.0 / term.tau * s.delta_k / (s.strike * s.strike) * growth;
                for &(key, share) in &s.components {
                    legs.push((key, w * share));
                }
            }
            adjustment -= c * term.forward_adjustment();
        }
        (legs, adjustment)
    }
}

/// Forward for an expiry: the supplied forward if the snapshot carries one,
/// otherwise put-call parity at the strike minimizing `|C - P|`.
pub fn compute_forward(snapshot: &ChainSnapshot, expiry: NaiveDate) -> Result<f64> {
    let tenor = snapshot.tenor_days(expiry);
    if let Some(&f) = snapshot.forward_by_tenor.get(&tenor) {
        return Ok(f);
    }
    let calls = snapshot.side(expiry, OptionKind::Call);
    let puts = snapshot.side(expiry, OptionKind::Put);
    let mut best: Option<(f64, f64)> = None;
    let (mut i, mut j) = (0, 0);
    while i < calls.len() && j < puts.len() {
        match calls[i].strike.total_cmp(&puts[j].strike) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let diff = calls[i].mid - puts[j].mid;
                if best.is_none_or(|(_, d)| diff.abs() < d.abs()) {
                    best = Some((calls[i].strike, diff));
                }
                i += 1;
                j += 1;
            }
        }
    }
    let (strike, diff) = best.ok_or(VixError::NoParityStrike { date: snapshot.quote_date, expiry })?;
    let rate = snapshot.rate_for_tenor(tenor)?;
    let tau = tenor as f64 / DAYS_PER_YEAR;
    Ok(strike + (rate * tau).exp() * diff)
}

/// Largest listed strike at or below the forward.
pub fn find_k0(snapshot: &ChainSnapshot, expiry: NaiveDate, forward: f64) -> Result<f64> {
    snapshot
        .strikes(expiry)
        .into_iter()
        .rfind(|k| *k <= forward)
        .ok_or(VixError::NoStrikeBelowForward { date: snapshot.quote_date, expiry, forward })
}

fn assign_widths(selected: &mut [SelectedOption], width: StrikeWidth, fallback: f64) {
    let n = selected.len();
    if n == 1 {
        selected[0].delta_k = fallback;
        return;
    }
    let strikes: Vec<f64> = selected.iter().map(|s| s.strike).collect();
    for (i, s) in selected.iter_mut().enumerate() {
        s.delta_k = match width {
            StrikeWidth::HalfNeighbor => {
                if i == 0 {
                    strikes[1] - strikes[0]
                } else if i == n - 1 {
                    strikes[n - 1] - strikes[n - 2]
                } else {
                    0.5 * (strikes[i + 1] - strikes[i - 1])
                }
            }
            StrikeWidth::Forward => {
                if i == n - 1 {
                    strikes[n - 1] - strikes[n - 2]
                } else {
                    strikes[i + 1] - strikes[i]
                }
            }
        };
    }
}

/// Collects OTM options outward from `K0`: puts below, calls above, both
/// averaged at `K0`. Each direction stops at the first pair of consecutive
/// listed strikes without a usable (positive-bid) quote; an isolated unusable
/// strike is skipped.
pub fn select_otm_options(
    snapshot: &ChainSnapshot,
    expiry: NaiveDate,
    forward: f64,
    k0: f64,
    cfg: &VixConfig,
) -> Result<TermSelection> {
    let tenor = snapshot.tenor_days(expiry);
    let rate = snapshot.rate_for_tenor(tenor)?;
    let strikes = snapshot.strikes(expiry);
    let cap = cfg.max_per_side.unwrap_or(usize::MAX);

    let usable = |strike: f64, kind: OptionKind| {
        snapshot
            .get(&QuoteKey::new(expiry, strike, kind))
            .filter(|q| q.is_usable())
            .map(|q| (q.key(), q.mid))
    };

    let walk = |iter: &mut dyn Iterator<Item = f64>, kind: OptionKind| {
        let mut out = Vec::new();
        let mut misses = 0;
        for strike in iter {
            if out.len() >= cap {
                break;
            }
            match usable(strike, kind) {
                Some((key, mid)) => {
                    misses = 0;
                    out.push(SelectedOption {
                        strike,
                        kind: if kind == OptionKind::Put { SelectedKind::Put } else { SelectedKind::Call },
                        mid,
                        components: vec![(key, 1.0)],
                        delta_k: 0.0,
                    });
                }
                None => {
                    misses += 1;
                    if misses >= 2 {
                        break;
                    }
                }
            }
        }
        out
    };

    let mut puts = walk(&mut strikes.iter().rev().copied().filter(|k| *k < k0), OptionKind::Put);
    puts.reverse();
    let calls = walk(&mut strikes.iter().copied().filter(|k| *k > k0), OptionKind::Call);

    let atm: Vec<(QuoteKey, f64)> = [OptionKind::Put, OptionKind::Call]
        .into_iter()
        .filter_map(|kind| usable(k0, kind))
        .collect();

    let mut selected = puts;
    if !atm.is_empty() {
        let share = 1.0 / atm.len() as f64;
        let mid = atm.iter().map(|(_, m)| m).sum::<f64>() * share;
        selected.push(SelectedOption {
            strike: k0,
            kind: SelectedKind::AtTheMoney,
            mid,
            components: atm.iter().map(|(k, _)| (*k, share)).collect(),
            delta_k: 0.0,
        });
    }
    selected.extend(calls);

    if !selected.is_empty() {
        let fallback = strikes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        assign_widths(&mut selected, cfg.width, if fallback.is_finite() { fallback } else { 0.0 });
    }

    Ok(TermSelection {
        expiry,
        tenor_days: tenor,
        tau: tenor as f64 / DAYS_PER_YEAR,
        rate,
        forward,
        k0,
        selected,
    })
}

/// Annualized model-free variance of one term.
pub fn term_variance(sel: &TermSelection) -> Result<f64> {
    if sel.selected.is_empty() {
        return Err(VixError::EmptySelection);
    }
    Ok(sel.option_sum()? - sel.forward_adjustment())
}

/// Picks the expiry equal to the horizon, else the closest below and above.
pub fn choose_terms(snapshot: &ChainSnapshot, horizon_days: i64) -> Result<TermChoice> {
    let expiries = snapshot.expiries();
    if let Some(&e) = expiries.iter().find(|e| snapshot.tenor_days(**e) == horizon_days) {
        return Ok(TermChoice::Single(e));
    }
    let near = expiries.iter().rev().find(|e| snapshot.tenor_days(**e) < horizon_days);
    let next = expiries.iter().find(|e| snapshot.tenor_days(**e) > horizon_days);
    match (near, next) {
        (Some(&a), Some(&b)) => Ok(TermChoice::Pair(a, b)),
        _ => Err(VixError::NoBracketingExpiries { date: snapshot.quote_date, horizon_days }),
    }
}

/// Forward, `K0` and option selection for one expiry.
pub fn build_term(snapshot: &ChainSnapshot, expiry: NaiveDate, cfg: &VixConfig) -> Result<TermSelection> {
    let forward = compute_forward(snapshot, expiry)?;
    let k0 = find_k0(snapshot, expiry, forward)?;
    select_otm_options(snapshot, expiry, forward, k0, cfg)
}

/// Interpolation coefficients `c_i` with `σ²(T) = Σ c_i σ_i²`.
pub fn interpolation_coefficients(tau1: f64, tau2: f64, tau: f64) -> (f64, f64) {
    let w1 = (tau2 - tau) / (tau2 - tau1);
    let w2 = (tau - tau1) / (tau2 - tau1);
    (tau1 * w1 / tau, tau2 * w2 / tau)
}

pub fn synthetic_vix(snapshot: &ChainSnapshot, horizon_days: i64, cfg: &VixConfig) -> Result<VixResult> {
    let date = snapshot.quote_date;
    let (terms, coefficients, by_term, variance) = match choose_terms(snapshot, horizon_days)? {
        TermChoice::Single(e) => {
            let term = build_term(snapshot, e, cfg)?;
            let v = term_variance(&term)?;
            (vec![term], vec![1.0], (v, None), v)
        }
        TermChoice::Pair(e1, e2) => {
            let t1 = build_term(snapshot, e1, cfg)?;
            let t2 = build_term(snapshot, e2, cfg)?;
            let v1 = term_variance(&t1)?;
            let v2 = term_variance(&t2)?;
            let tau = horizon_days as f64 / DAYS_PER_YEAR;
            let w1 = (t2.tau - tau) / (t2.tau - t1.tau);
            let w2 = (tau - t1.tau) / (t2.tau - t1.tau);
            let variance = (t1.tau * v1 * w1 + t2.tau * v2 * w2) / tau;
            let (c1, c2) = interpolation_coefficients(t1.tau, t2.tau, tau);
            (vec![t1, t2], vec![c1, c2], (v1, Some(v2)), variance)
        }
    };
    if variance < 0.0 || !variance.is_finite() {
        return Err(VixError::NegativeVariance { date, variance });
    }
    Ok(VixResult {
        date,
        horizon_days,
        value: 100.0 * variance.sqrt(),
        variance,
        variance_by_term: by_term,
        option_count: terms.iter().map(|t| t.option_count()).sum(),
        terms,
        term_coefficients: coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::OptionQuote;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    /// Chain on one expiry with the given (strike, call mid, put mid) rows;
    /// `None` mids are left unquoted.
    fn chain(rows: &[(f64, Option<f64>, Option<f64>)], rate: f64) -> ChainSnapshot {
        let qd = d("2020-01-02");
        let e = d("2020-02-01");
        let mut quotes = Vec::new();
        for &(k, c, p) in rows {
            if let Some(c) = c {
                quotes.push(OptionQuote::new(qd, e, k, OptionKind::Call, c - 0.05, c + 0.05).unwrap());
            }
            if let Some(p) = p {
                quotes.push(OptionQuote::new(qd, e, k, OptionKind::Put, p - 0.05, p + 0.05).unwrap());
            }
        }
        let mut s = ChainSnapshot::new(qd, quotes, None).unwrap();
        s.rate_by_tenor.insert(30, rate);
        s
    }

    #[test]
    fn forward_from_parity_at_equal_prices() {
        let s = chain(&[(1990.0, Some(20.0), Some(12.0)), (2000.0, Some(15.0), Some(15.0)), (2010.0, Some(9.0), Some(19.0))], 0.03);
        assert_eq!(compute_forward(&s, d("2020-02-01")).unwrap(), 2000.0);
    }

    #[test]
    fn forward_zero_rate_parity() {
        let s = chain(&[(1960.0, Some(20.0), Some(15.0)), (1970.0, Some(12.0), Some(25.0))], 0.0);
        assert!((compute_forward(&s, d("2020-02-01")).unwrap() - 1965.0).abs() < 1e-12);
    }

    #[test]
    fn supplied_forward_returned_unchanged() {
        let mut s = chain(&[(1960.0, Some(20.0), Some(15.0))], 0.0);
        s.forward_by_tenor.insert(30, 1234.5);
        assert_eq!(compute_forward(&s, d("2020-02-01")).unwrap(), 1234.5);
    }

    #[test]
    fn forward_requires_both_kinds() {
        let s = chain(&[(1960.0, Some(20.0), None), (1970.0, None, Some(25.0))], 0.0);
        assert!(matches!(compute_forward(&s, d("2020-02-01")), Err(VixError::NoParityStrike { .. })));
        let mut no_rate = chain(&[(1960.0, Some(20.0), Some(15.0))], 0.0);
        no_rate.rate_by_tenor.clear();
        assert!(matches!(compute_forward(&no_rate, d("2020-02-01")), Err(VixError::Rate(_))));
    }

    #[test]
    fn isolated_call_gap_skipped() {
        // ten strikes 1980..2025, K0 = 2000; call missing at K0 + 3ΔK = 2015
        let rows: Vec<_> = (0..10)
            .map(|i| {
                let k = 1980.0 + 5.0 * i as f64;
                let call = if k == 2015.0 { None } else { Some(1.0 + i as f64) };
                (k, call, Some(2.0 + i as f64))
            })
            .collect();
        let s = chain(&rows, 0.0);
        let sel = select_otm_options(&s, d("2020-02-01"), 2001.0, 2000.0, &VixConfig::default()).unwrap();
        let strikes: Vec<f64> = sel.selected.iter().map(|o| o.strike).collect();
        // hand walk: puts 1980..1995, K0, calls 2005, 2010, (skip 2015), 2020, 2025
        assert_eq!(strikes, vec![1980.0, 1985.0, 1990.0, 1995.0, 2000.0, 2005.0, 2010.0, 2020.0, 2025.0]);
        assert_eq!(sel.selected[4].kind, SelectedKind::AtTheMoney);
        assert_eq!(sel.selected[4].components.len(), 2);
        assert_eq!(sel.option_count(), 10);
    }

    #[test]
    fn two_consecutive_missing_puts_stop_the_walk() {
        // K0 = 2000; puts missing at K0 - 5ΔK and K0 - 6ΔK
        let rows: Vec<_> = (0..13)
            .map(|i| {
                let k = 1950.0 + 5.0 * i as f64;
                let put = if k == 1975.0 || k == 1970.0 { None } else { Some(1.0) };
                (k, Some(1.0), put)
            })
            .collect();
        let s = chain(&rows, 0.0);
        let sel = select_otm_options(&s, d("2020-02-01"), 2000.0, 2000.0, &VixConfig::default()).unwrap();
        let lowest = sel.selected.first().unwrap();
        assert_eq!(lowest.strike, 1980.0);
        assert_eq!(sel.selected.iter().filter(|o| o.kind == SelectedKind::Put).count(), 4);
    }

    #[test]
    fn zero_bid_counts_as_missing() {
        let qd = d("2020-01-02");
        let e = d("2020-02-01");
        let mut quotes = Vec::new();
        for i in 0..8 {
            let k = 1960.0 + 5.0 * i as f64;
            let bid = if k == 1980.0 || k == 1975.0 { 0.0 } else { 1.0 };
            quotes.push(OptionQuote::new(qd, e, k, OptionKind::Put, bid, 1.2).unwrap());
            quotes.push(OptionQuote::new(qd, e, k, OptionKind::Call, 1.0, 1.2).unwrap());
        }
        let mut s = ChainSnapshot::new(qd, quotes, None).unwrap();
        s.rate_by_tenor.insert(30, 0.0);
        let sel = select_otm_options(&s, e, 1995.0, 1995.0, &VixConfig::default()).unwrap();
        let puts: Vec<f64> = sel.selected.iter().filter(|o| o.kind == SelectedKind::Put).map(|o| o.strike).collect();
        assert_eq!(puts, vec![1985.0, 1990.0]);
    }

    #[test]
    fn max_per_side_caps_selection() {
        let rows: Vec<_> = (0..21).map(|i| (1950.0 + 5.0 * i as f64, Some(1.0), Some(1.0))).collect();
        let s = chain(&rows, 0.0);
        let sel = select_otm_options(&s, d("2020-02-01"), 2000.0, 2000.0, &VixConfig::with_max_per_side(3)).unwrap();
        assert_eq!(sel.selected.len(), 7);
        assert_eq!(sel.selected[0].strike, 1985.0);
        assert_eq!(sel.selected[6].strike, 2015.0);
    }

    #[test]
    fn widths_half_neighbor_and_forward() {
        let rows = [(1990.0, Some(1.0), Some(1.0)), (2000.0, Some(1.0), Some(1.0)), (2010.0, Some(1.0), Some(1.0)), (2030.0, Some(1.0), Some(1.0))];
        let s = chain(&rows, 0.0);
        let half = select_otm_options(&s, d("2020-02-01"), 2000.0, 2000.0, &VixConfig::default()).unwrap();
        let w: Vec<f64> = half.selected.iter().map(|o| o.delta_k).collect();
        assert_eq!(w, vec![10.0, 10.0, 15.0, 20.0]);
        let cfg = VixConfig { width: StrikeWidth::Forward, ..VixConfig::default() };
        let fwd = select_otm_options(&s, d("2020-02-01"), 2000.0, 2000.0, &cfg).unwrap();
        let w: Vec<f64> = fwd.selected.iter().map(|o| o.delta_k).collect();
        assert_eq!(w, vec![10.0, 10.0, 20.0, 20.0]);
    }

    #[test]
    fn single_option_term_variance() {
        let key = QuoteKey::new(d("2020-02-01"), 2000.0, OptionKind::Call);
        let sel = TermSelection {
            expiry: d("2020-02-01"),
            tenor_days: 30,
            tau: 30.0 / 365.0,
            rate: 0.0,
            forward: 2000.0,
            k0: 2000.0,
            selected: vec![SelectedOption {
                strike: 2000.0,
                kind: SelectedKind::AtTheMoney,
                mid: 10.0,
                components: vec![(key, 1.0)],
                delta_k: 5.0,
            }],
        };
        let v = term_variance(&sel).unwrap();
        assert!((v - 2.0 * (365.0 / 30.0) * (5.0 / 4.0e6) * 10.0).abs() < 1e-18);
        assert!((v - 3.0417e-4).abs() < 1e-8);
        assert_eq!(sel.forward_adjustment(), 0.0);
        let empty = TermSelection { selected: vec![], ..sel.clone() };
        assert!(matches!(term_variance(&empty), Err(VixError::EmptySelection)));
        let bad = TermSelection { tau: 0.0, ..sel };
        assert!(matches!(term_variance(&bad), Err(VixError::NonPositiveTenor(_))));
    }

    #[test]
    fn constant_term_variance_interpolates_to_itself() {
        for (t1, t2, t) in [(23.0, 37.0, 30.0), (10.0, 50.0, 45.0), (30.0, 60.0, 30.0)] {
            let (c1, c2) = interpolation_coefficients(t1 / 365.0, t2 / 365.0, t / 365.0);
            let v = 0.0437;
            assert!((c1 * v + c2 * v - v).abs() < 1e-15);
        }
        let (_, c2) = interpolation_coefficients(23.0, 37.0, 23.0);
        assert_eq!(c2, 0.0);
    }
}
