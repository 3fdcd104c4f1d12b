//! Daily option chains and underlying prices: domain types, CSV I/O, the
//! synthetic market generator and chain validation.

mod black_scholes;
mod io;
mod synthetic;
mod validate;

use std::collections::BTreeMap;
use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

pub use black_scholes::{bs_price, normal_cdf};
pub use io::{
    attach_rates, load_chain_series, load_market, load_price_series, load_rates, write_market,
    write_options_csv, write_price_csv, write_rates_csv, MarketData, RateRow, OPTIONS_FILE,
    RATES_FILE, UNDERLYING_FILE,
};
pub use synthetic::{generate_synthetic_market, SyntheticMarket, SyntheticMarketConfig, VolProcess};
pub use validate::{validate_chain, MissingQuote, SpacingIrregularity, ValidationReport};

/// Calendar days per year used for option year fractions (actual/365).
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Absolute precision for stored and compared prices, in currency units.
pub const PRICE_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("line {line}: bid {bid} exceeds ask {ask}")]
    CrossedQuote { line: u64, bid: f64, ask: f64 },
    #[error("duplicate quote {date} {key}")]
    DuplicateQuote { date: NaiveDate, key: QuoteKey },
    #[error("dates not strictly increasing at {0}")]
    NonMonotoneDates(NaiveDate),
    #[error("invalid quote: {0}")]
    InvalidQuote(String),
    #[error("invalid price series: {0}")]
    InvalidPrices(String),
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("no rate available for {date} tenor {tenor_days}d")]
    MissingRate { date: NaiveDate, tenor_days: i64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, MarketDataError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn code(self) -> char {
        match self {
            OptionKind::Call => 'C',
            OptionKind::Put => 'P',
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s.trim() {
            "C" | "c" => Some(OptionKind::Call),
            "P" | "p" => Some(OptionKind::Put),
            _ => None,
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Identifies one listed option within a snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteKey {
    pub expiry: NaiveDate,
    pub strike: f64,
    pub kind: OptionKind,
}

impl QuoteKey {
    pub fn new(expiry: NaiveDate, strike: f64, kind: OptionKind) -> Self {
        Self { expiry, strike, kind }
    }
}

impl Eq for QuoteKey {}

impl PartialOrd for QuoteKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QuoteKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.expiry
            .cmp(&other.expiry)
            .then(self.kind.cmp(&other.kind))
            .then(self.strike.total_cmp(&other.strike))
    }
}

impl fmt::Display for QuoteKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.expiry, self.strike, self.kind)
    }
}

/// A single option midquote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptionQuote {
    pub quote_date: NaiveDate,
    pub expiry: NaiveDate,
    pub strike: f64,
    pub kind: OptionKind,
    pub bid: f64,
    pub ask: f64,
    pub mid: f64,
}

impl OptionQuote {
    pub fn new(
        quote_date: NaiveDate,
        expiry: NaiveDate,
        strike: f64,
        kind: OptionKind,
        bid: f64,
        ask: f64,
    ) -> Result<Self> {
        if !(bid.is_finite() && ask.is_finite() && strike.is_finite()) {
            return Err(MarketDataError::InvalidQuote("non-finite field".into()));
        }
        if bid < 0.0 {
            return Err(MarketDataError::InvalidQuote(format!("negative bid {bid}")));
        }
        if ask < bid {
            return Err(MarketDataError::CrossedQuote { line: 0, bid, ask });
        }
        if strike <= 0.0 {
            return Err(MarketDataError::InvalidQuote(format!("strike {strike} must be > 0")));
        }
        if expiry <= quote_date {
            return Err(MarketDataError::InvalidQuote(format!(
                "expiry {expiry} not after quote date {quote_date}"
            )));
        }
        Ok(Self {
            quote_date,
            expiry,
            strike,
            kind,
            bid,
            ask,
            mid: 0.5 * (bid + ask),
        })
    }

    pub fn key(&self) -> QuoteKey {
        QuoteKey::new(self.expiry, self.strike, self.kind)
    }

    /// A quote is usable for index construction when its bid is strictly positive.
    pub fn is_usable(&self) -> bool {
        self.bid > 0.0
    }
}

/// One day's option chain plus spot, forwards and rates.
///
/// Quotes are kept sorted by (expiry, kind, strike) so every lookup is
/// independent of the order the quotes were supplied in.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSnapshot {
    pub quote_date: NaiveDate,
    quotes: Vec<OptionQuote>,
    pub spot: Option<f64>,
    /// Forward price keyed by tenor in calendar days.
    pub forward_by_tenor: BTreeMap<i64, f64>,
    /// Annualized continuously-compounded rate keyed by tenor in calendar days.
    pub rate_by_tenor: BTreeMap<i64, f64>,
}

impl ChainSnapshot {
    pub fn new(quote_date: NaiveDate, mut quotes: Vec<OptionQuote>, spot: Option<f64>) -> Result<Self> {
        if let Some(q) = quotes.iter().find(|q| q.quote_date != quote_date) {
            return Err(MarketDataError::InvalidQuote(format!(
                "quote dated {} in snapshot for {}",
                q.quote_date, quote_date
            )));
        }
        quotes.sort_by_key(|q| q.key());
        for pair in quotes.windows(2) {
            if pair[0].key() == pair[1].key() {
                return Err(MarketDataError::DuplicateQuote { date: quote_date, key: pair[0].key() });
            }
        }
        Ok(Self {
            quote_date,
            quotes,
            spot,
            forward_by_tenor: BTreeMap::new(),
            rate_by_tenor: BTreeMap::new(),
        })
    }

    pub fn quotes(&self) -> &[OptionQuote] {
        &self.quotes
    }

    pub fn len(&self) -> usize {
        self.quotes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quotes.is_empty()
    }

    /// Distinct expiries, ascending.
    pub fn expiries(&self) -> Vec<NaiveDate> {
        let mut out: Vec<NaiveDate> = self.quotes.iter().map(|q| q.expiry).collect();
        out.dedup();
        out
    }

    pub fn tenor_days(&self, expiry: NaiveDate) -> i64 {
        (expiry - self.quote_date).num_days()
    }

    /// Quotes for one (expiry, kind), ascending in strike.
    pub fn side(&self, expiry: NaiveDate, kind: OptionKind) -> &[OptionQuote] {
        let lo = self
            .quotes
            .partition_point(|q| (q.expiry, q.kind) < (expiry, kind));
        let hi = self
            .quotes
            .partition_point(|q| (q.expiry, q.kind) <= (expiry, kind));
        &self.quotes[lo..hi]
    }

    pub fn get(&self, key: &QuoteKey) -> Option<&OptionQuote> {
        self.quotes
            .binary_search_by(|q| q.key().cmp(key))
            .ok()
            .map(|i| &self.quotes[i])
    }

    /// Union of listed strikes across both kinds for an expiry, ascending.
    pub fn strikes(&self, expiry: NaiveDate) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .side(expiry, OptionKind::Call)
            .iter()
            .chain(self.side(expiry, OptionKind::Put))
            .map(|q| q.strike)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Rate for a tenor: exact match, otherwise linear in tenor between the
    /// bracketing entries, flat beyond the ends.
    pub fn rate_for_tenor(&self, tenor_days: i64) -> Result<f64> {
        let missing = || MarketDataError::MissingRate { date: self.quote_date, tenor_days };
        if let Some(r) = self.rate_by_tenor.get(&tenor_days) {
            return Ok(*r);
        }
        let below = self.rate_by_tenor.range(..tenor_days).next_back();
        let above = self.rate_by_tenor.range(tenor_days..).next();
        match (below, above) {
            (Some((&t0, &r0)), Some((&t1, &r1))) => {
                let w = (tenor_days - t0) as f64 / (t1 - t0) as f64;
                Ok(r0 + w * (r1 - r0))
            }
            (Some((_, &r)), None) | (None, Some((_, &r))) => Ok(r),
            (None, None) => Err(missing()),
        }
    }
}

/// Daily closes with strictly increasing dates and positive prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(MarketDataError::InvalidPrices("length mismatch".into()));
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(MarketDataError::NonMonotoneDates(w[1]));
            }
        }
        if let Some(p) = closes.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(MarketDataError::InvalidPrices(format!("non-positive price {p}")));
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Simple return at index `j` with the previous close as denominator.
    pub fn simple_return(&self, j: usize) -> f64 {
        (self.closes[j] - self.closes[j - 1]) / self.closes[j - 1]
    }
}
