use chrono::NaiveDate;

use super::{ChainSnapshot, OptionKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingQuote {
    pub date: NaiveDate,
    pub expiry: NaiveDate,
    pub strike: f64,
    pub kind: OptionKind,
}

/// Two neighbouring listed strikes whose distance is not a whole multiple
/// of the expiry's base spacing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingIrregularity {
    pub date: NaiveDate,
    pub expiry: NaiveDate,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub missing: Vec<MissingQuote>,
    pub irregular: Vec<SpacingIrregularity>,
    /// Dates where no listed expiry pair brackets the requested horizon.
    pub unbracketed: Vec<NaiveDate>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.missing.is_empty() && self.irregular.is_empty() && self.unbracketed.is_empty()
    }
}

const LATTICE_TOL: f64 = 1e-6;

/// Reports quote gaps, irregular strike spacing and unbracketed horizons.
///
/// Per (date, expiry) the strike lattice runs from the lowest to the highest
/// listed strike at the smallest observed spacing; every lattice point lacking
/// a call or put is reported as missing.
pub fn validate_chain(series: &[ChainSnapshot], horizon_days: Option<i64>) -> ValidationReport {
    let mut report = ValidationReport::default();
    for snap in series {
        let expiries = snap.expiries();
        for &expiry in &expiries {
            let strikes = snap.strikes(expiry);
            if strikes.len() < 2 {
                continue;
            }
            let base = strikes
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            for w in strikes.windows(2) {
                let ratio = (w[1] - w[0]) / base;
                if (ratio - ratio.round()).abs() > LATTICE_TOL {
                    report.irregular.push(SpacingIrregularity {
                        date: snap.quote_date,
                        expiry,
                        lower: w[0],
                        upper: w[1],
                    });
                }
            }
            let lo = strikes[0];
            let hi = strikes[strikes.len() - 1];
            let steps = ((hi - lo) / base).round() as usize;
            for kind in [OptionKind::Call, OptionKind::Put] {
                let side = snap.side(expiry, kind);
                let mut cursor = 0;
                for i in 0..=steps {
                    let k = lo + i as f64 * base;
                    while cursor < side.len() && side[cursor].strike < k - LATTICE_TOL * base {
                        cursor += 1;
                    }
                    let present = cursor < side.len() && (side[cursor].strike - k).abs() <= LATTICE_TOL * base;
                    if !present {
                        report.missing.push(MissingQuote { date: snap.quote_date, expiry, strike: k, kind });
                    }
                }
            }
        }
        if let Some(h) = horizon_days {
            let tenors: Vec<i64> = expiries.iter().map(|e| snap.tenor_days(*e)).collect();
            let exact = tenors.contains(&h);
            let below = tenors.iter().any(|&t| t < h);
            let above = tenors.iter().any(|&t| t > h);
            if !(exact || (below && above)) {
                report.unbracketed.push(snap.quote_date);
            }
        }
    }
    report
}
