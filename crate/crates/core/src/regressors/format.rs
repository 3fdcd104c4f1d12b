//! Plain-text model files.
//!
//! ```text
//! volindex-model 1
//! kind linear|fnn|forest
//! dim <D>
//! ...            kind-specific `key value...` lines, one record per line
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle
//! reproduces the model bit for bit.

use std::fmt::Write as _;
use std::str::FromStr;

use super::{FnnModel, ForestModel, LinearModel, Node, RegressionModel, RegressorError, Result, TrainTrace, Tree};

pub const FORMAT_TAG: &str = "volindex-model 1";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_model(model: &RegressionModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{FORMAT_TAG}");
    let _ = writeln!(s, "kind {}", model.kind());
    let _ = writeln!(s, "dim {}", model.dim());
    match model {
        RegressionModel::Linear(m) => {
            let _ = writeln!(s, "lambda {}", m.ridge_lambda);
            let _ = writeln!(s, "intercept {}", m.intercept);
            let _ = writeln!(s, "coefficients {}", join(&m.coefficients));
        }
        RegressionModel::Fnn(m) => {
            let _ = writeln!(s, "hidden {}", m.hidden());
            let _ = writeln!(s, "lambda {}", m.lambda);
            let _ = writeln!(s, "shift {}", m.shift);
            let _ = writeln!(s, "scale {}", m.scale);
            let _ = writeln!(s, "final_loss {}", m.trace.final_loss);
            let _ = writeln!(s, "epochs {}", m.trace.epochs);
            for row in m.w1.chunks(m.dim.max(1)) {
                let _ = writeln!(s, "w1 {}", join(row));
            }
            let _ = writeln!(s, "b1 {}", join(&m.b1));
            let _ = writeln!(s, "w2 {}", join(&m.w2));
            let _ = writeln!(s, "b2 {}", m.b2);
        }
        RegressionModel::Forest(m) => {
            let depth = m.max_depth.map_or("inf".to_string(), |d| d.to_string());
            let _ = writeln!(s, "max_depth {depth}");
            let _ = writeln!(s, "seed {}", m.seed);
            let _ = writeln!(s, "y_range {} {}", m.y_min, m.y_max);
            let _ = writeln!(s, "trees {}", m.trees.len());
            for t in &m.trees {
                let _ = writeln!(s, "tree {}", t.nodes.len());
                for n in &t.nodes {
                    match n {
                        Node::Split { feature, threshold, left, right } => {
                            let _ = writeln!(s, "split {feature} {threshold} {left} {right}");
                        }
                        Node::Leaf { value } => {
                            let _ = writeln!(s, "leaf {value}");
                        }
                    }
                }
            }
        }
    }
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> RegressorError {
    RegressorError::Format(format!("line {}: {msg}", line + 1))
}

impl<'a> Lines<'a> {
    fn next(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        for (no, line) in self.it.by_ref() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let k = parts.next().unwrap_or_default();
            if k != key {
                return Err(bad(no, format!("expected '{key}', found '{k}'")));
            }
            return Ok((no, parts.collect()));
        }
        Err(RegressorError::Format(format!("unexpected end of file, expected '{key}'")))
    }

    fn values<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let (no, parts) = self.next(key)?;
        parts.iter().map(|p| p.parse::<T>().map_err(|_| bad(no, format!("bad value '{p}' for {key}")))).collect()
    }

    fn one<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (no, parts) = self.next(key)?;
        match parts.as_slice() {
            [p] => p.parse::<T>().map_err(|_| bad(no, format!("bad value '{p}' for {key}"))),
            _ => Err(bad(no, format!("{key} takes one value"))),
        }
    }
}

fn expect_len<T>(v: Vec<T>, n: usize, what: &str) -> Result<Vec<T>> {
    if v.len() != n {
        return Err(RegressorError::Format(format!("{what}: expected {n} values, got {}", v.len())));
    }
    Ok(v)
}

pub fn read_model(text: &str) -> Result<RegressionModel> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(FORMAT_TAG) {
        return Err(RegressorError::Format(format!("missing '{FORMAT_TAG}' header")));
    }
    let mut r = Lines { it: text.lines().enumerate() };
    r.it.next();
    let kind: String = r.one("kind")?;
    let dim: usize = r.one("dim")?;
    let model = match kind.as_str() {
        "linear" => {
            let ridge_lambda = r.one("lambda")?;
            let intercept = r.one("intercept")?;
            let coefficients = expect_len(r.values("coefficients")?, dim, "coefficients")?;
            RegressionModel::Linear(LinearModel { coefficients, intercept, ridge_lambda })
        }
        "fnn" => {
            let h: usize = r.one("hidden")?;
            let lambda = r.one("lambda")?;
            let shift = r.one("shift")?;
            let scale = r.one("scale")?;
            let final_loss = r.one("final_loss")?;
            let epochs = r.one("epochs")?;
            let mut w1 = Vec::with_capacity(h * dim);
            for _ in 0..h {
                w1.extend(expect_len(r.values::<f64>("w1")?, dim, "w1 row")?);
            }
            let b1 = expect_len(r.values("b1")?, h, "b1")?;
            let w2 = expect_len(r.values("w2")?, h, "w2")?;
            let b2 = r.one("b2")?;
            RegressionModel::Fnn(FnnModel {
                dim,
                w1,
                b1,
                w2,
                b2,
                lambda,
                shift,
                scale,
                trace: TrainTrace { final_loss, epochs },
            })
        }
        "forest" => {
            let depth: String = r.one("max_depth")?;
            let max_depth = match depth.as_str() {
                "inf" => None,
                d => Some(d.parse().map_err(|_| RegressorError::Format(format!("bad max_depth '{d}'")))?),
            };
            let seed = r.one("seed")?;
            let range = expect_len(r.values::<f64>("y_range")?, 2, "y_range")?;
            let n_trees: usize = r.one("trees")?;
            let mut trees = Vec::with_capacity(n_trees);
            for _ in 0..n_trees {
                let n_nodes: usize = r.one("tree")?;
                let mut nodes = Vec::with_capacity(n_nodes);
                for _ in 0..n_nodes {
                    let (no, parts) = r
                        .it
                        .by_ref()
                        .find(|(_, l)| !l.trim().is_empty())
                        .map(|(no, l)| (no, l.split_whitespace().collect::<Vec<_>>()))
                        .ok_or_else(|| RegressorError::Format("unexpected end of file in tree".into()))?;
                    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(no, format!("bad number '{s}'")));
                    let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(no, format!("bad index '{s}'")));
                    let node = match parts.as_slice() {
                        ["leaf", v] => Node::Leaf { value: num(v)? },
                        ["split", f, t, l, rt] => {
                            let (feature, left, right) = (idx(f)?, idx(l)?, idx(rt)?);
                            if feature >= dim || left >= n_nodes || right >= n_nodes {
                                return Err(bad(no, "split index out of range"));
                            }
                            Node::Split { feature, threshold: num(t)?, left, right }
                        }
                        _ => return Err(bad(no, "expected 'leaf v' or 'split f t l r'")),
                    };
                    nodes.push(node);
                }
                trees.push(Tree { nodes });
            }
            RegressionModel::Forest(ForestModel { dim, max_depth, seed, trees, y_min: range[0], y_max: range[1] })
        }
        other => return Err(RegressorError::Format(format!("unknown model kind '{other}'"))),
    };
    Ok(model)
}
