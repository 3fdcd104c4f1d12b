//! Regressors with a shared fit / predict / local-affine interface.
//!
//! Linear and ReLU network models are piecewise affine in their inputs, so a
//! forecast can be expanded into exact coefficients at any query point. The
//! forest cannot, and says so.

mod fnn;
mod forest;
mod format;
mod linear;

pub use fnn::{fit_fnn, FnnConfig, FnnModel, Optimizer, TrainTrace};
pub use forest::{fit_forest, fit_forest_with, ForestConfig, ForestModel, Node, Tree};
pub use format::{read_model, write_model, FORMAT_TAG};
pub use linear::{fit_ols, fit_ridge, LinearModel};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressorError {
    #[error("design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { rank: usize, cols: usize },
    #[error("need more rows than columns: {rows} rows, {cols} columns")]
    Underdetermined { rows: usize, cols: usize },
    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no training rows")]
    Empty,
    #[error("{0}")]
    InvalidInput(String),
    #[error("normal equations could not be factorised")]
    Numerical,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("{0} forecasts are not piecewise linear in the inputs and cannot be replicated")]
    NotPiecewiseLinear(&'static str),
    #[error("model file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, RegressorError>;

pub(crate) fn check_xy(xs: &[Vec<f64>], ys: &[f64]) -> Result<usize> {
    if xs.is_empty() {
        return Err(RegressorError::Empty);
    }
    if xs.len() != ys.len() {
        return Err(RegressorError::InvalidInput(format!("{} rows but {} targets", xs.len(), ys.len())));
    }
    let d = xs[0].len();
    for row in xs {
        if row.len() != d {
            return Err(RegressorError::Dimension { expected: d, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(RegressorError::InvalidInput("non-finite feature".into()));
        }
    }
    if ys.iter().any(|v| !v.is_finite()) {
        return Err(RegressorError::InvalidInput("non-finite target".into()));
    }
    Ok(d)
}

/// Exact affine expansion of a forecast around one input.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAffine {
    pub coefficients: Vec<f64>,
    pub constant: f64,
    /// Activation pattern the expansion is valid for: hidden units then the
    /// output unit. `None` for globally affine models.
    pub pattern: Option<Vec<bool>>,
}

impl LocalAffine {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Linear,
    Ridge,
    Forest,
    Fnn,
    /// Predicts 0 everywhere; with the variance-premium target this is the
    /// benchmark index itself.
    Zero,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Linear => "linear",
            Algorithm::Ridge => "ridge",
            Algorithm::Forest => "forest",
            Algorithm::Fnn => "fnn",
            Algorithm::Zero => "zero",
        }
    }

    /// Hyperparameter grid searched during tuning.
    pub fn grid(self) -> Vec<Hyper> {
        const LAMBDAS: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e2, 1e3, 1e4];
        match self {
            Algorithm::Linear | Algorithm::Zero => vec![Hyper::None],
            Algorithm::Ridge | Algorithm::Fnn => LAMBDAS.iter().map(|&l| Hyper::Lambda(l)).collect(),
            Algorithm::Forest => [Some(3), Some(5), Some(10), None].into_iter().map(Hyper::Depth).collect(),
        }
    }

    pub fn is_piecewise_linear(self) -> bool {
        !matches!(self, Algorithm::Forest)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(Algorithm::Linear),
            "ridge" => Ok(Algorithm::Ridge),
            "forest" | "rf" => Ok(Algorithm::Forest),
            "fnn" => Ok(Algorithm::Fnn),
            "zero" => Ok(Algorithm::Zero),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hyper {
    None,
    Lambda(f64),
    /// Maximum tree depth; `None` grows until leaves are pure.
    Depth(Option<usize>),
}

impl Hyper {
    /// Larger means more regularised; used to break tuning ties.
    pub fn strength(self) -> f64 {
        match self {
            Hyper::None => 0.0,
            Hyper::Lambda(l) => l,
            Hyper::Depth(Some(d)) => -(d as f64),
            Hyper::Depth(None) => f64::NEG_INFINITY,
        }
    }
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyper::None => f.write_str("-"),
            Hyper::Lambda(l) => write!(f, "lambda={l}"),
            Hyper::Depth(Some(d)) => write!(f, "depth={d}"),
            Hyper::Depth(None) => f.write_str("depth=inf"),
        }
    }
}

/// Settings that are not tuned but shape every fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainConfig {
    pub fnn: FnnConfig,
    pub forest: ForestConfig,
    /// Shift targets by their training minimum before network fitting, so the
    /// output ReLU does not clamp signed targets.
    pub shift_targets: bool,
}


#[derive(Debug, Clone, PartialEq)]
pub enum RegressionModel {
    Linear(LinearModel),
    Fnn(FnnModel),
    Forest(ForestModel),
}

impl RegressionModel {
    pub fn fit(algo: Algorithm, hyper: Hyper, xs: &[Vec<f64>], ys: &[f64], cfg: &TrainConfig) -> Result<Self> {
        match (algo, hyper) {
            (Algorithm::Linear, _) => fit_ols(xs, ys).map(RegressionModel::Linear),
            (Algorithm::Zero, _) => {
                let d = check_xy(xs, ys)?;
                Ok(RegressionModel::Linear(LinearModel::zero(d)))
            }
            (Algorithm::Ridge, Hyper::Lambda(l)) => fit_ridge(xs, ys, l).map(RegressionModel::Linear),
            (Algorithm::Fnn, Hyper::Lambda(l)) => {
                let fnn = FnnConfig { shift_targets: cfg.shift_targets, ..cfg.fnn.clone() };
                fit_fnn(xs, ys, l, &fnn).map(RegressionModel::Fnn)
            }
            (Algorithm::Forest, Hyper::Depth(d)) => {
                let forest = ForestConfig { max_depth: d, ..cfg.forest.clone() };
                fit_forest_with(xs, ys, &forest).map(RegressionModel::Forest)
            }
            (a, h) => Err(RegressorError::InvalidInput(format!("{h} is not a hyperparameter of {a}"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            RegressionModel::Linear(m) => m.coefficients.len(),
            RegressionModel::Fnn(m) => m.dim,
            RegressionModel::Forest(m) => m.dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RegressionModel::Linear(_) => "linear",
            RegressionModel::Fnn(_) => "fnn",
            RegressionModel::Forest(_) => "forest",
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(RegressorError::Dimension { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match self {
            RegressionModel::Linear(m) => m.predict(x),
            RegressionModel::Fnn(m) => m.predict(x),
            RegressionModel::Forest(m) => m.predict(x),
        })
    }

    pub fn local_affine(&self, x: &[f64]) -> Result<LocalAffine> {
        self.check_dim(x)?;
        match self {
            RegressionModel::Linear(m) => Ok(m.local_affine()),
            RegressionModel::Fnn(m) => Ok(m.local_affine(x)),
            RegressionModel::Forest(_) => Err(RegressorError::NotPiecewiseLinear("random forest")),
        }
    }

    /// Does `affine` still describe the model at `x`? Recomputes the
    /// activation pattern and compares it with the stored one.
    pub fn certificate_holds(&self, affine: &LocalAffine, x: &[f64]) -> bool {
        match (self, &affine.pattern) {
            (RegressionModel::Linear(_), None) => true,
            (RegressionModel::Fnn(m), Some(p)) => m.pattern(x) == *p,
            _ => false,
        }
    }
}
