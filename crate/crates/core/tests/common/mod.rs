#![allow(dead_code)]

use volindex::features::FeatureConfig;
use volindex::market_data::{generate_synthetic_market, SyntheticMarket, SyntheticMarketConfig};
use volindex::validation::{build_samples, BacktestConfig, Sample};
use volindex::vix::VixConfig;

pub const N_PER_SIDE: usize = 5;

pub fn feature_config(n_per_side: usize) -> FeatureConfig {
    FeatureConfig { strikes_per_side: n_per_side, ..FeatureConfig::default() }
}

/// A market long enough for exactly `n` usable samples, and those samples.
pub fn dataset(n: usize, seed: u64) -> (SyntheticMarket, Vec<Sample>) {
    let cfg = SyntheticMarketConfig { n_days: n + 80, strikes_per_side: 20, rng_seed: seed, ..Default::default() };
    let m = generate_synthetic_market(&cfg).unwrap();
    let (mut samples, _) =
        build_samples(&m.market, &feature_config(N_PER_SIDE), &VixConfig::with_max_per_side(N_PER_SIDE)).unwrap();
    assert!(samples.len() >= n, "only {} samples", samples.len());
    samples.truncate(n);
    (m, samples)
}

/// Backtest settings light enough for the test suite.
pub fn quick_config() -> BacktestConfig {
    let mut cfg = BacktestConfig::default();
    cfg.train.fnn.epochs = 5;
    cfg.train.forest.n_trees = 5;
    cfg
}
