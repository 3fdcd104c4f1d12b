//! Bagged CART regression trees.
//!
//! Splits minimise the children's summed squared error, which is the same as
//! maximising `S_l²/n_l + S_r²/n_r`. Each feature keeps a presorted index
//! array that is stably partitioned as the tree grows, so a level costs
//! `O(n·D)` rather than a sort per node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_xy, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows every branch until it is pure or unsplittable.
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Resample rows with replacement for each tree. Off only in tests.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: None, seed: 0, bootstrap: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub dim: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    pub trees: Vec<Tree>,
    /// Training target range; averages are clamped to it against rounding.
    pub y_min: f64,
    pub y_max: f64,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        (s / self.trees.len() as f64).clamp(self.y_min, self.y_max)
    }
}

pub fn fit_forest(xs: &[Vec<f64>], ys: &[f64], max_depth: Option<usize>, n_trees: usize, seed: u64) -> Result<ForestModel> {
    fit_forest_with(xs, ys, &ForestConfig { n_trees, max_depth, seed, bootstrap: true })
}

pub fn fit_forest_with(xs: &[Vec<f64>], ys: &[f64], cfg: &ForestConfig) -> Result<ForestModel> {
    let d = check_xy(xs, ys)?;
    if cfg.n_trees == 0 {
        return Err(super::RegressorError::InvalidInput("forest needs at least one tree".into()));
    }
    let n = ys.len();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let sample: Vec<usize> = if cfg.bootstrap {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t as u64);
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(xs, ys, &sample, d, cfg.max_depth)
        })
        .collect();
    let y_min = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ForestModel { dim: d, max_depth: cfg.max_depth, seed: cfg.seed, trees, y_min, y_max })
}

struct Builder {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    // order[f] holds sample positions; every node owns a contiguous range of
    // each feature's array, sorted by that feature.
    order: Vec<Vec<usize>>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    nodes: Vec<Node>,
    max_depth: Option<usize>,
}

fn grow(xs: &[Vec<f64>], ys: &[f64], sample: &[usize], d: usize, max_depth: Option<usize>) -> Tree {
    let m = sample.len();
    let cols: Vec<Vec<f64>> = (0..d).map(|f| sample.iter().map(|&i| xs[i][f]).collect()).collect();
    let y: Vec<f64> = sample.iter().map(|&i| ys[i]).collect();
    let order = cols
        .iter()
        .map(|c| {
            let mut o: Vec<usize> = (0..m).collect();
            o.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
            o
        })
        .collect();
    let mut b = Builder { cols, y, order, goes_left: vec![false; m], scratch: vec![0; m], nodes: Vec::new(), max_depth };
    b.build(0, m, 0);
    Tree { nodes: b.nodes }
}

impl Builder {
    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let idx = &self.order[0][start..end];
        let count = (end - start) as f64;
        let sum: f64 = idx.iter().map(|&p| self.y[p]).sum();
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&p| self.y[p] == first);
        let leaf = if pure {
            first
        } else {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(self.y[p]), hi.max(self.y[p])));
            (sum / count).clamp(lo, hi)
        };
        let at_limit = self.max_depth.is_some_and(|md| depth >= md);
        if pure || at_limit || end - start < 2 {
            self.nodes[id] = Node::Leaf { value: leaf };
            return id;
        }
        let Some((feature, threshold, n_left)) = self.best_split(start, end, sum) else {
            self.nodes[id] = Node::Leaf { value: leaf };
            return id;
        };
        self.partition(start, end, feature, threshold);
        let left = self.build(start, start + n_left, depth + 1);
        let right = self.build(start + n_left, end, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn best_split(&self, start: usize, end: usize, total: f64) -> Option<(usize, f64, usize)> {
        let m = end - start;
        let mut best: Option<(f64, usize, f64, usize)> = None;
        for (f, col) in self.cols.iter().enumerate() {
            let ord = &self.order[f][start..end];
            let mut sl = 0.0;
            for k in 0..m - 1 {
                sl += self.y[ord[k]];
                let a = col[ord[k]];
                let b = col[ord[k + 1]];
                if !(a < b) {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (m - k - 1) as f64;
                let sr = total - sl;
                let score = sl * sl / nl + sr * sr / nr;
                if best.is_none_or(|(s, ..)| score > s) {
                    let mid = 0.5 * (a + b);
                    let thr = if mid < b { mid } else { a };
                    best = Some((score, f, thr, k + 1));
                }
            }
        }
        best.map(|(_, f, t, n)| (f, t, n))
    }

    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64) {
        for &p in &self.order[feature][start..end] {
            self.goes_left[p] = self.cols[feature][p] <= threshold;
        }
        for ord in &mut self.order {
            let seg = &mut ord[start..end];
            let mut l = 0;
            let mut r = 0;
            for k in 0..seg.len() {
                let p = seg[k];
                if self.goes_left[p] {
                    seg[l] = p;
                    l += 1;
                } else {
                    self.scratch[r] = p;
                    r += 1;
                }
            }
            seg[l..].copy_from_slice(&self.scratch[..r]);
        }
    }
}
