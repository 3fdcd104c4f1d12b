//! One-hidden-layer ReLU network, ReLU on the output as well.
//!
//! `pred(x) = shift + scale · relu(w2 · relu(W1 x + b1) + b2)`
//!
//! The affine target transform keeps the network piecewise linear in `x`
//! while letting signed targets (shifted by their training minimum) survive
//! the output ReLU.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_xy, LocalAffine, RegressorError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Samples per step; folds smaller than this train full-batch.
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub shift_targets: bool,
}

impl Default for FnnConfig {
    fn default() -> Self {
        Self { epochs: 2000, learning_rate: 1e-3, batch_size: 32, seed: 0, optimizer: Optimizer::Adam, shift_targets: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainTrace {
    pub final_loss: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FnnModel {
    pub dim: usize,
    /// Hidden weights, row-major `H × D`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub lambda: f64,
    pub shift: f64,
    pub scale: f64,
    pub trace: TrainTrace,
}

// Parameter layout shared by training and the gradient API: W1, b1, w2, b2.
struct Layout {
    d: usize,
    h: usize,
}

impl Layout {
    fn b1(&self) -> usize {
        self.h * self.d
    }
    fn w2(&self) -> usize {
        self.b1() + self.h
    }
    fn b2(&self) -> usize {
        self.w2() + self.h
    }
    fn len(&self) -> usize {
        self.b2() + 1
    }
}

fn forward(l: &Layout, theta: &[f64], x: &[f64], z1: &mut [f64]) -> f64 {
    let (w1, rest) = theta.split_at(l.b1());
    let b1 = &rest[..l.h];
    let w2 = &theta[l.w2()..l.b2()];
    let mut o = theta[l.b2()];
    for j in 0..l.h {
        let row = &w1[j * l.d..(j + 1) * l.d];
        let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[j];
        z1[j] = z;
        if z > 0.0 {
            o += w2[j] * z;
        }
    }
    o
}

fn penalty(l: &Layout, theta: &[f64]) -> f64 {
    theta[..l.b1()].iter().chain(&theta[l.w2()..l.b2()]).map(|w| w * w).sum()
}

/// Mean squared error over `idx` plus `λ·Σw²`; accumulates the gradient into
/// `grad` (overwritten) and returns the objective.
fn batch_gradient(
    l: &Layout,
    theta: &[f64],
    xs: &[Vec<f64>],
    ts: &[f64],
    idx: &[usize],
    lambda: f64,
    grad: &mut [f64],
    z1: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let inv = 1.0 / idx.len() as f64;
    let mut sse = 0.0;
    for &i in idx {
        let x = &xs[i];
        let o = forward(l, theta, x, z1);
        let out = o.max(0.0);
        let err = out - ts[i];
        sse += err * err;
        if o <= 0.0 {
            continue;
        }
        let d_out = 2.0 * err * inv;
        grad[l.b2()] += d_out;
        for j in 0..l.h {
            let z = z1[j];
            if z <= 0.0 {
                continue;
            }
            grad[l.w2() + j] += d_out * z;
            let d_z = d_out * theta[l.w2() + j];
            grad[l.b1() + j] += d_z;
            let g_row = &mut grad[j * l.d..(j + 1) * l.d];
            for (g, v) in g_row.iter_mut().zip(x) {
                *g += d_z * v;
            }
        }
    }
    if lambda > 0.0 {
        for k in (0..l.b1()).chain(l.w2()..l.b2()) {
            grad[k] += 2.0 * lambda * theta[k];
        }
    }
    sse * inv + lambda * penalty(l, theta)
}

impl FnnModel {
    /// Hidden width equals the input width.
    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    fn layout(&self) -> Layout {
        Layout { d: self.dim, h: self.hidden() }
    }

    /// Glorot-uniform weights, zero hidden biases, output bias `bias0`.
    pub fn initialized(dim: usize, seed: u64, bias0: f64) -> Self {
        let h = dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = (6.0 / (dim + h) as f64).sqrt();
        let a2 = (6.0 / (h + 1) as f64).sqrt();
        let w1 = (0..h * dim).map(|_| rng.gen_range(-a1..a1)).collect();
        let w2 = (0..h).map(|_| rng.gen_range(-a2..a2)).collect();
        Self {
            dim,
            w1,
            b1: vec![0.0; h],
            w2,
            b2: bias0,
            lambda: 0.0,
            shift: 0.0,
            scale: 1.0,
            trace: TrainTrace { final_loss: f64::NAN, epochs: 0 },
        }
    }

    /// Flat parameters: W1 (row-major), b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.layout().len());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        let l = self.layout();
        assert_eq!(theta.len(), l.len(), "parameter vector length");
        self.w1.copy_from_slice(&theta[..l.b1()]);
        self.b1.copy_from_slice(&theta[l.b1()..l.w2()]);
        self.w2.copy_from_slice(&theta[l.w2()..l.b2()]);
        self.b2 = theta[l.b2()];
    }

    /// Hidden and output pre-activations.
    pub fn pre_activations(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let theta = self.params();
        let mut z1 = vec![0.0; self.hidden()];
        let o = forward(&self.layout(), &theta, x, &mut z1);
        (z1, o)
    }

    /// Network output before the target transform.
    pub fn net_output(&self, x: &[f64]) -> f64 {
        let mut o = self.b2;
        for j in 0..self.hidden() {
            let z = self.w1[j * self.dim..(j + 1) * self.dim].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            if z > 0.0 {
                o += self.w2[j] * z;
            }
        }
        o.max(0.0)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.shift + self.scale * self.net_output(x)
    }

    /// Training objective on already-transformed targets.
    pub fn objective(&self, xs: &[Vec<f64>], ts: &[f64]) -> f64 {
        let mut g = vec![0.0; self.layout().len()];
        self.objective_and_gradient(xs, ts, &mut g)
    }

    pub fn gradient(&self, xs: &[Vec<f64>], ts: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.layout().len()];
        self.objective_and_gradient(xs, ts, &mut g);
        g
    }

    fn objective_and_gradient(&self, xs: &[Vec<f64>], ts: &[f64], grad: &mut [f64]) -> f64 {
        let idx: Vec<usize> = (0..xs.len()).collect();
        let mut z1 = vec![0.0; self.hidden()];
        batch_gradient(&self.layout(), &self.params(), xs, ts, &idx, self.lambda, grad, &mut z1)
    }

    /// Hidden units then the output unit; a unit is active iff its
    /// pre-activation is strictly positive.
    pub fn pattern(&self, x: &[f64]) -> Vec<bool> {
        let (z1, o) = self.pre_activations(x);
        z1.iter().map(|z| *z > 0.0).chain(std::iter::once(o > 0.0)).collect()
    }

    pub fn local_affine(&self, x: &[f64]) -> LocalAffine {
        let pattern = self.pattern(x);
        let h = self.hidden();
        let mut coefficients = vec![0.0; self.dim];
        let mut constant = self.shift;
        if pattern[h] {
            let mut c = self.b2;
            for j in (0..h).filter(|&j| pattern[j]) {
                let w = self.w2[j];
                for (acc, w1) in coefficients.iter_mut().zip(&self.w1[j * self.dim..(j + 1) * self.dim]) {
                    *acc += w * w1;
                }
                c += w * self.b1[j];
            }
            coefficients.iter_mut().for_each(|a| *a *= self.scale);
            constant += self.scale * c;
        }
        LocalAffine { coefficients, constant, pattern: Some(pattern) }
    }

    /// Lipschitz constant of `predict` in the Euclidean norm (Frobenius
    /// bound on the hidden layer).
    pub fn lipschitz_bound(&self) -> f64 {
        let f1 = self.w1.iter().map(|w| w * w).sum::<f64>().sqrt();
        let f2 = self.w2.iter().map(|w| w * w).sum::<f64>().sqrt();
        self.scale.abs() * f1 * f2
    }
}

/// Mini-batch training of MSE + `λ·Σw²` (connection weights only).
pub fn fit_fnn(xs: &[Vec<f64>], ys: &[f64], lambda: f64, cfg: &FnnConfig) -> Result<FnnModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(RegressorError::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(RegressorError::InvalidInput("batch size and learning rate must be positive".into()));
    }
    let d = check_xy(xs, ys)?;
    let n = ys.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    let scale = if sd > 1e-12 * mean.abs().max(1e-300) && sd.is_finite() { sd } else { 1.0 };
    let shift = if cfg.shift_targets { ys.iter().cloned().fold(f64::INFINITY, f64::min) } else { 0.0 };
    let ts: Vec<f64> = ys.iter().map(|y| (y - shift) / scale).collect();
    let t_mean = ts.iter().sum::<f64>() / n as f64;

    let mut model = FnnModel::initialized(d, cfg.seed, t_mean);
    model.lambda = lambda;
    model.shift = shift;
    model.scale = scale;

    let l = model.layout();
    let mut theta = model.params();
    let mut grad = vec![0.0; l.len()];
    let mut m1 = vec![0.0; l.len()];
    let mut m2 = vec![0.0; l.len()];
    let mut z1 = vec![0.0; l.h];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let batch = cfg.batch_size.min(n);
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut step = 0i32;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let loss = batch_gradient(&l, &theta, xs, &ts, chunk, lambda, &mut grad, &mut z1);
            epoch_loss += loss * chunk.len() as f64;
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in theta.iter_mut().zip(&grad) {
                        *p -= cfg.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    for k in 0..theta.len() {
                        let g = grad[k];
                        m1[k] = beta1 * m1[k] + (1.0 - beta1) * g;
                        m2[k] = beta2 * m2[k] + (1.0 - beta2) * g * g;
                        theta[k] -= cfg.learning_rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + eps);
                    }
                }
            }
        }
        let epoch_loss = epoch_loss / n as f64;
        if !epoch_loss.is_finite() || theta.iter().any(|p| !p.is_finite()) {
            return Err(RegressorError::Diverged { epoch, loss: epoch_loss });
        }
    }
    model.set_params(&theta);
    let final_loss = model.objective(xs, &ts);
    if !final_loss.is_finite() {
        return Err(RegressorError::Diverged { epoch: cfg.epochs, loss: final_loss });
    }
    model.trace = TrainTrace { final_loss, epochs: cfg.epochs };
    Ok(model)
}
