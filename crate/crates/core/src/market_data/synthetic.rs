//! Synthetic daily market: a discrete-time square-root stochastic-variance
//! path for the underlying, with every listed option priced by Black-Scholes
//! at the instantaneous model volatility times a premium factor.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    bs_price, ChainSnapshot, MarketData, MarketDataError, OptionKind, OptionQuote, PriceSeries,
    Result, DAYS_PER_YEAR,
};

/// Trading days per year for the simulation step.
const STEPS_PER_YEAR: f64 = 252.0;

/// Parameters of the variance process `v`, all annualized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolProcess {
    pub mean_reversion: f64,
    pub long_run_variance: f64,
    pub vol_of_vol: f64,
    /// Correlation between return and variance shocks.
    pub correlation: f64,
}

impl Default for VolProcess {
    fn default() -> Self {
        Self { mean_reversion: 4.0, long_run_variance: 0.04, vol_of_vol: 0.4, correlation: -0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticMarketConfig {
    pub n_days: usize,
    pub spot0: f64,
    #[serde(flatten)]
    pub vol_process: VolProcess,
    /// Multiplicative markup applied to model volatility when pricing options.
    pub premium: f64,
    pub strike_spacing: f64,
    pub strikes_per_side: usize,
    /// Calendar-day maturities listed every day, near then next.
    pub tenor_days: [i64; 2],
    pub quote_gap_rate: f64,
    pub rng_seed: u64,
    /// Flat continuously-compounded rate, also the drift of the underlying.
    pub rate: f64,
    /// Log-normal measurement noise on option mids (0 disables).
    pub quote_noise: f64,
    pub start_date: NaiveDate,
}

impl Default for SyntheticMarketConfig {
    fn default() -> Self {
        Self {
            n_days: 1500,
            spot0: 1000.0,
            vol_process: VolProcess::default(),
            premium: 1.15,
            strike_spacing: 5.0,
            strikes_per_side: 40,
            tenor_days: [23, 37],
            quote_gap_rate: 0.02,
            rng_seed: 42,
            rate: 0.01,
            quote_noise: 0.005,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"),
        }
    }
}

impl SyntheticMarketConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MarketDataError::InvalidConfig(m.to_string()));
        let vp = &self.vol_process;
        if self.n_days < 2 {
            return bad("n_days must be >= 2");
        }
        if !(self.spot0 > 0.0) {
            return bad("spot0 must be > 0");
        }
        if !(self.premium >= 1.0) {
            return bad("premium must be >= 1");
        }
        if !(0.0..1.0).contains(&self.quote_gap_rate) {
            return bad("quote_gap_rate must lie in [0, 1)");
        }
        if !(self.strike_spacing > 0.0) {
            return bad("strike_spacing must be > 0");
        }
        if !(0 < self.tenor_days[0] && self.tenor_days[0] < self.tenor_days[1]) {
            return bad("tenor_days must be increasing and positive");
        }
        if !(vp.mean_reversion >= 0.0 && vp.long_run_variance >= 0.0 && vp.vol_of_vol >= 0.0) {
            return bad("vol process parameters must be non-negative");
        }
        if !(-1.0..=1.0).contains(&vp.correlation) {
            return bad("correlation must lie in [-1, 1]");
        }
        if !(self.quote_noise >= 0.0 && self.rate.is_finite()) {
            return bad("quote_noise must be >= 0 and rate finite");
        }
        Ok(())
    }

    /// Parses the flat `key = value` configuration format.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let table: toml::Table = s.parse().map_err(|e: toml::de::Error| MarketDataError::InvalidConfig(e.to_string()))?;
        let known: toml::Table = toml::from_str(&Self::default().to_toml_string()).expect("default parses");
        if let Some(k) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(MarketDataError::InvalidConfig(format!("unknown key {k:?}")));
        }
        let cfg: Self = toml::from_str(s).map_err(|e| MarketDataError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Generator output: the market plus the latent variance path.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub market: MarketData,
    /// Instantaneous annualized model variance per day (before the premium).
    pub variance: Vec<f64>,
    pub config: SyntheticMarketConfig,
}

impl SyntheticMarket {
    /// True forward for a day and tenor under the generator's rate.
    pub fn forward(&self, day: usize, tenor_days: i64) -> f64 {
        self.market.prices.closes()[day] * (self.config.rate * tenor_days as f64 / DAYS_PER_YEAR).exp()
    }

    /// Implied volatility used to price day `day`'s options.
    pub fn implied_vol(&self, day: usize) -> f64 {
        self.variance[day].max(0.0).sqrt() * self.config.premium
    }
}

fn next_weekday(d: NaiveDate) -> NaiveDate {
    let mut n = d + Duration::days(1);
    while matches!(n.weekday(), Weekday::Sat | Weekday::Sun) {
        n += Duration::days(1);
    }
    n
}

fn trading_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut d = start;
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d += Duration::days(1);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(d);
        d = next_weekday(d);
    }
    out
}

pub fn generate_synthetic_market(cfg: &SyntheticMarketConfig) -> Result<SyntheticMarket> {
    cfg.validate()?;
    let vp = cfg.vol_process;
    let dt = 1.0 / STEPS_PER_YEAR;
    let dates = trading_dates(cfg.start_date, cfg.n_days);

    let mut path_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut quote_rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    quote_rng.set_stream(1);

    let mut spots = Vec::with_capacity(cfg.n_days);
    let mut variance = Vec::with_capacity(cfg.n_days);
    let mut s = cfg.spot0;
    let mut v = vp.long_run_variance;
    let rho_perp = (1.0 - vp.correlation * vp.correlation).sqrt();
    for i in 0..cfg.n_days {
        if i > 0 {
            let z1: f64 = path_rng.sample(StandardNormal);
            let z2: f64 = path_rng.sample(StandardNormal);
            // full truncation: the positive part drives both drift and diffusion
            let vp_pos = v.max(0.0);
            s *= ((cfg.rate - 0.5 * vp_pos) * dt + (vp_pos * dt).sqrt() * z1).exp();
            v += vp.mean_reversion * (vp.long_run_variance - vp_pos) * dt
                + vp.vol_of_vol * (vp_pos * dt).sqrt() * (vp.correlation * z1 + rho_perp * z2);
        }
        spots.push(s);
        variance.push(v);
    }

    let mut chains = Vec::with_capacity(cfg.n_days);
    for (i, &date) in dates.iter().enumerate() {
        let iv = variance[i].max(0.0).sqrt() * cfg.premium;
        let mut quotes = Vec::new();
        let mut snap_rates = Vec::new();
        for &tenor in &cfg.tenor_days {
            let expiry = date + Duration::days(tenor);
            let tau = tenor as f64 / DAYS_PER_YEAR;
            let fwd = spots[i] * (cfg.rate * tau).exp();
            let center = (fwd / cfg.strike_spacing).floor() * cfg.strike_spacing;
            snap_rates.push((tenor, cfg.rate));
            let m = cfg.strikes_per_side as i64;
            for j in -m..=m {
                let strike = center + j as f64 * cfg.strike_spacing;
                if strike <= 0.0 {
                    continue;
                }
                for kind in [OptionKind::Call, OptionKind::Put] {
                    let noise: f64 = quote_rng.sample(StandardNormal);
                    let gap: f64 = quote_rng.gen();
                    if j != 0 && gap < cfg.quote_gap_rate {
                        continue;
                    }
                    let mut price = bs_price(kind, fwd, strike, cfg.rate, tau, iv).max(0.0);
                    if cfg.quote_noise > 0.0 {
                        price *= (cfg.quote_noise * noise).exp();
                    }
                    let half = (0.05 + 0.01 * price).min(price);
                    let quote = OptionQuote::new(date, expiry, strike, kind, price - half, price + half)?;
                    quotes.push(quote);
                }
            }
        }
        let mut snap = ChainSnapshot::new(date, quotes, Some(spots[i]))?;
        for (tenor, r) in snap_rates {
            snap.rate_by_tenor.insert(tenor, r);
        }
        chains.push(snap);
    }

    Ok(SyntheticMarket {
        market: MarketData { prices: PriceSeries::new(dates, spots)?, chains },
        variance,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticMarketConfig {
        SyntheticMarketConfig { n_days: 30, strikes_per_side: 10, ..Default::default() }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic_market(&small()).unwrap();
        let b = generate_synthetic_market(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_market(&SyntheticMarketConfig { rng_seed: 7, ..small() }).unwrap();
        assert_ne!(a.market.prices, c.market.prices);
    }

    #[test]
    fn degenerate_process_has_constant_vol() {
        let cfg = SyntheticMarketConfig {
            premium: 1.0,
            quote_gap_rate: 0.0,
            vol_process: VolProcess { vol_of_vol: 0.0, ..small().vol_process },
            ..small()
        };
        let m = generate_synthetic_market(&cfg).unwrap();
        for day in 0..cfg.n_days {
            assert!((m.implied_vol(day) - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(SyntheticMarketConfig { premium: 0.9, ..small() }.validate().is_err());
        assert!(SyntheticMarketConfig { quote_gap_rate: 1.0, ..small() }.validate().is_err());
        assert!(SyntheticMarketConfig { tenor_days: [40, 20], ..small() }.validate().is_err());
    }

    #[test]
    fn atm_strike_never_deleted() {
        let cfg = SyntheticMarketConfig { quote_gap_rate: 0.9, ..small() };
        let m = generate_synthetic_market(&cfg).unwrap();
        for (i, snap) in m.market.chains.iter().enumerate() {
            for &t in &cfg.tenor_days {
                let expiry = snap.quote_date + Duration::days(t);
                let center = (m.forward(i, t) / cfg.strike_spacing).floor() * cfg.strike_spacing;
                for kind in [OptionKind::Call, OptionKind::Put] {
                    assert!(snap.side(expiry, kind).iter().any(|q| q.strike == center));
                }
            }
        }
    }

    #[test]
    fn flat_config_round_trips() {
        let cfg = small();
        let text = cfg.to_toml_string();
        assert!(text.contains("mean_reversion"));
        assert_eq!(SyntheticMarketConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = SyntheticMarketConfig::from_toml_str("n_days = 10\npremium = 1.3\n").unwrap();
        assert_eq!(partial.n_days, 10);
        assert_eq!(partial.premium, 1.3);
        assert!(SyntheticMarketConfig::from_toml_str("bogus = 1").is_err());
    }
}
