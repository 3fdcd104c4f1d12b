//! CSV readers and writers for option chains, underlying closes and rates.
//!
//! Floats are written in shortest round-trip form, so a read/write cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

use super::{ChainSnapshot, MarketDataError, OptionKind, OptionQuote, PriceSeries, Result};

pub const OPTIONS_FILE: &str = "options.csv";
pub const UNDERLYING_FILE: &str = "underlying.csv";
pub const RATES_FILE: &str = "rates.csv";

/// Prices and chains aligned on the same trading calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketData {
    pub prices: PriceSeries,
    pub chains: Vec<ChainSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub date: NaiveDate,
    pub tenor_days: i64,
    pub rate: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> MarketDataError {
    MarketDataError::Io { path: path.display().to_string(), source }
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn check_header(rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(|e| MarketDataError::Csv(e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(MarketDataError::Malformed {
            line: 1,
            msg: format!("expected header {}, found {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn records(rdr: &mut csv::Reader<File>) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    rdr.records().map(|r| match r {
        Ok(rec) => {
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            Ok((line, rec))
        }
        Err(e) => {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Err(MarketDataError::Malformed { line, msg: e.to_string() })
        }
    })
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| MarketDataError::Malformed {
        line,
        msg: format!("missing field {name}"),
    })?;
    raw.parse().map_err(|_| MarketDataError::Malformed {
        line,
        msg: format!("cannot parse {name} from {raw:?}"),
    })
}

/// Reads an option CSV (`date,expiry,strike,kind,bid,ask`) into one snapshot
/// per quote date. Spot and rates are left unset.
pub fn load_chain_series(path: &Path) -> Result<Vec<ChainSnapshot>> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &["date", "expiry", "strike", "kind", "bid", "ask"])?;

    let mut out = Vec::new();
    let mut current: Option<(NaiveDate, Vec<OptionQuote>)> = None;
    for row in records(&mut rdr) {
        let (line, rec) = row?;
        if rec.len() != 6 {
            return Err(MarketDataError::Malformed { line, msg: format!("expected 6 fields, found {}", rec.len()) });
        }
        let date: NaiveDate = field(&rec, 0, "date", line)?;
        let expiry: NaiveDate = field(&rec, 1, "expiry", line)?;
        let strike: f64 = field(&rec, 2, "strike", line)?;
        let kind = OptionKind::from_code(&rec[3]).ok_or_else(|| MarketDataError::Malformed {
            line,
            msg: format!("kind must be C or P, found {:?}", &rec[3]),
        })?;
        let bid: f64 = field(&rec, 4, "bid", line)?;
        let ask: f64 = field(&rec, 5, "ask", line)?;
        let quote = OptionQuote::new(date, expiry, strike, kind, bid, ask).map_err(|e| match e {
            MarketDataError::CrossedQuote { bid, ask, .. } => MarketDataError::CrossedQuote { line, bid, ask },
            other => MarketDataError::Malformed { line, msg: other.to_string() },
        })?;

        match &mut current {
            Some((d, quotes)) if *d == date => quotes.push(quote),
            Some((d, _)) if date < *d => return Err(MarketDataError::NonMonotoneDates(date)),
            _ => {
                if let Some((d, quotes)) = current.take() {
                    out.push(ChainSnapshot::new(d, quotes, None)?);
                }
                current = Some((date, vec![quote]));
            }
        }
    }
    if let Some((d, quotes)) = current {
        out.push(ChainSnapshot::new(d, quotes, None)?);
    }
    Ok(out)
}

/// Reads an underlying CSV (`date,close`).
pub fn load_price_series(path: &Path) -> Result<PriceSeries> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &["date", "close"])?;
    let mut dates = Vec::new();
    let mut closes = Vec::new();
    for row in records(&mut rdr) {
        let (line, rec) = row?;
        let date: NaiveDate = field(&rec, 0, "date", line)?;
        let close: f64 = field(&rec, 1, "close", line)?;
        if let Some(&last) = dates.last() {
            if date <= last {
                return Err(MarketDataError::NonMonotoneDates(date));
            }
        }
        dates.push(date);
        closes.push(close);
    }
    PriceSeries::new(dates, closes)
}

/// Reads a rates CSV (`date,tenor_days,rate`).
pub fn load_rates(path: &Path) -> Result<Vec<RateRow>> {
    let mut rdr = reader(path)?;
    check_header(&mut rdr, &["date", "tenor_days", "rate"])?;
    let mut out = Vec::new();
    for row in records(&mut rdr) {
        let (line, rec) = row?;
        out.push(RateRow {
            date: field(&rec, 0, "date", line)?,
            tenor_days: field(&rec, 1, "tenor_days", line)?,
            rate: field(&rec, 2, "rate", line)?,
        });
    }
    Ok(out)
}

pub fn attach_rates(chains: &mut [ChainSnapshot], rates: &[RateRow]) {
    let mut by_date: BTreeMap<NaiveDate, Vec<&RateRow>> = BTreeMap::new();
    for r in rates {
        by_date.entry(r.date).or_default().push(r);
    }
    for snap in chains.iter_mut() {
        if let Some(rows) = by_date.get(&snap.quote_date) {
            for r in rows {
                snap.rate_by_tenor.insert(r.tenor_days, r.rate);
            }
        }
    }
}

/// Loads `options.csv`, `underlying.csv` and (if present) `rates.csv` from a directory.
pub fn load_market(dir: &Path) -> Result<MarketData> {
    let prices = load_price_series(&dir.join(UNDERLYING_FILE))?;
    let mut chains = load_chain_series(&dir.join(OPTIONS_FILE))?;
    let rates_path = dir.join(RATES_FILE);
    if rates_path.exists() {
        let rates = load_rates(&rates_path)?;
        attach_rates(&mut chains, &rates);
    }
    for snap in chains.iter_mut() {
        snap.spot = prices.index_of(snap.quote_date).map(|i| prices.closes()[i]);
    }
    Ok(MarketData { prices, chains })
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    File::create(path).map(std::io::BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn write_options_csv(path: &Path, chains: &[ChainSnapshot]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("date,expiry,strike,kind,bid,ask\n");
    for snap in chains {
        for q in snap.quotes() {
            body.push_str(&format!(
                "{},{},{},{},{},{}\n",
                q.quote_date, q.expiry, q.strike, q.kind, q.bid, q.ask
            ));
        }
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn write_price_csv(path: &Path, prices: &PriceSeries) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("date,close\n");
    for (d, p) in prices.dates().iter().zip(prices.closes()) {
        body.push_str(&format!("{d},{p}\n"));
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn write_rates_csv(path: &Path, chains: &[ChainSnapshot]) -> Result<()> {
    let mut w = create(path)?;
    let mut body = String::from("date,tenor_days,rate\n");
    for snap in chains {
        for (tenor, rate) in &snap.rate_by_tenor {
            body.push_str(&format!("{},{},{}\n", snap.quote_date, tenor, rate));
        }
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))
}

/// Writes the three market files into `dir` (created if absent).
pub fn write_market(dir: &Path, market: &MarketData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_options_csv(&dir.join(OPTIONS_FILE), &market.chains)?;
    write_price_csv(&dir.join(UNDERLYING_FILE), &market.prices)?;
    write_rates_csv(&dir.join(RATES_FILE), &market.chains)
}
