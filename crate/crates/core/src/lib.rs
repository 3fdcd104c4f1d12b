pub mod market_data;
pub mod vix;
pub mod features;
pub mod targets;
pub mod regressors;
pub mod validation;
pub mod index_builder;
pub mod cli;
