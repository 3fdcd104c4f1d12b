use volindex::market_data::{
    generate_synthetic_market, load_market, validate_chain, write_market, OptionKind, SyntheticMarketConfig,
    VolProcess,
};

fn quiet(n_days: usize) -> SyntheticMarketConfig {
    SyntheticMarketConfig { n_days, quote_gap_rate: 0.0, quote_noise: 0.0, strikes_per_side: 15, ..Default::default() }
}

#[test]
fn put_call_parity_on_clean_quotes() {
    let m = generate_synthetic_market(&quiet(40)).unwrap();
    let r = m.config.rate;
    for (day, snap) in m.market.chains.iter().enumerate() {
        for e in snap.expiries() {
            let tenor = snap.tenor_days(e);
            let tau = tenor as f64 / 365.0;
            let fwd = m.forward(day, tenor);
            for k in snap.strikes(e) {
                let c = snap.side(e, OptionKind::Call).iter().find(|q| q.strike == k).unwrap().mid;
                let p = snap.side(e, OptionKind::Put).iter().find(|q| q.strike == k).unwrap().mid;
                let parity = (-r * tau).exp() * (fwd - k);
                assert!((c - p - parity).abs() < 1e-8, "{} {e} {k}: {}", snap.quote_date, c - p - parity);
            }
        }
    }
}

#[test]
fn gap_count_matches_rate() {
    let cfg = SyntheticMarketConfig { n_days: 200, quote_gap_rate: 0.05, strikes_per_side: 20, ..Default::default() };
    let m = generate_synthetic_market(&cfg).unwrap();
    // every day lists 2 tenors × 41 strikes × 2 kinds; the centre strike is never dropped
    let eligible = (cfg.n_days * 2 * 40 * 2) as f64;
    let present: usize = m.market.chains.iter().map(|s| s.len()).sum();
    let total = cfg.n_days * 2 * 41 * 2;
    let gaps = (total - present) as f64;
    let mean = eligible * cfg.quote_gap_rate;
    let sd = (eligible * cfg.quote_gap_rate * (1.0 - cfg.quote_gap_rate)).sqrt();
    assert!((gaps - mean).abs() < 3.0 * sd, "gaps {gaps}, expected {mean} ± {}", 3.0 * sd);
}

#[test]
fn clean_market_validates() {
    let m = generate_synthetic_market(&quiet(30)).unwrap();
    assert!(validate_chain(&m.market.chains, Some(30)).is_empty());
}

#[test]
fn csv_round_trip() {
    let cfg = SyntheticMarketConfig { n_days: 25, strikes_per_side: 10, ..Default::default() };
    let m = generate_synthetic_market(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_market(dir.path(), &m.market).unwrap();
    let back = load_market(dir.path()).unwrap();
    assert_eq!(back.prices, m.market.prices);
    assert_eq!(back.chains.len(), m.market.chains.len());
    for (a, b) in back.chains.iter().zip(&m.market.chains) {
        assert_eq!(a.quote_date, b.quote_date);
        assert_eq!(a.quotes(), b.quotes());
        assert_eq!(a.rate_by_tenor, b.rate_by_tenor);
    }
}

#[test]
fn seeds_reproduce_and_differ() {
    let cfg = SyntheticMarketConfig { n_days: 60, strikes_per_side: 8, ..Default::default() };
    let a = generate_synthetic_market(&cfg).unwrap();
    let b = generate_synthetic_market(&cfg).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic_market(&SyntheticMarketConfig { rng_seed: cfg.rng_seed + 1, ..cfg }).unwrap();
    assert_ne!(a.market.prices, c.market.prices);
}

#[test]
fn variance_stays_positive_under_feller() {
    let vp = VolProcess::default();
    assert!(2.0 * vp.mean_reversion * vp.long_run_variance >= vp.vol_of_vol * vp.vol_of_vol);
    let m = generate_synthetic_market(&SyntheticMarketConfig { n_days: 2000, strikes_per_side: 2, ..Default::default() }).unwrap();
    let floor = m.variance.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(floor > 0.0, "variance hit {floor}");
}

#[test]
fn config_text_round_trips_and_rejects_typos() {
    let cfg = SyntheticMarketConfig { premium: 1.3, rng_seed: 9, ..Default::default() };
    assert_eq!(SyntheticMarketConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    assert!(SyntheticMarketConfig::from_toml_str("premum = 1.2").is_err());
    assert!(SyntheticMarketConfig::from_toml_str("premium = 0.5").is_err());
}
