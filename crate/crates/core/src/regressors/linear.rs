use nalgebra::{DMatrix, DVector};

use super::{check_xy, LocalAffine, RegressorError, Result};

/// `y = β·x + β0`; `ridge_lambda == 0` marks an ordinary least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub ridge_lambda: f64,
}

impl LinearModel {
    pub fn zero(dim: usize) -> Self {
        Self { coefficients: vec![0.0; dim], intercept: 0.0, ridge_lambda: 0.0 }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>() + self.intercept
    }

    pub fn local_affine(&self) -> LocalAffine {
        LocalAffine { coefficients: self.coefficients.clone(), constant: self.intercept, pattern: None }
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

/// Least squares through a Householder QR of `[X | 1]`. A column-pivoted
/// factorisation is used first to detect rank deficiency, which is an error
/// rather than something to hide behind a pseudo-inverse.
pub fn fit_ols(xs: &[Vec<f64>], ys: &[f64]) -> Result<LinearModel> {
    let d = check_xy(xs, ys)?;
    let n = xs.len();
    let p = d + 1;
    if n <= p {
        return Err(RegressorError::Underdetermined { rows: n, cols: p });
    }
    let a = DMatrix::from_fn(n, p, |i, j| if j < d { xs[i][j] } else { 1.0 });

    let pivoted = a.clone().col_piv_qr();
    let r = pivoted.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    let tol = top * (n.max(p) as f64) * f64::EPSILON;
    let rank = diag.iter().filter(|v| **v > tol).count();
    if rank < p {
        return Err(RegressorError::RankDeficient { rank, cols: p });
    }

    let qr = a.qr();
    let mut rhs = DVector::from_column_slice(ys);
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let beta = r
        .solve_upper_triangular(&rhs.rows(0, p).into_owned())
        .ok_or(RegressorError::Numerical)?;
    Ok(LinearModel { coefficients: beta.as_slice()[..d].to_vec(), intercept: beta[d], ridge_lambda: 0.0 })
}

/// Ridge on centred data: `(XcᵀXc + λI)β = Xcᵀyc`, intercept recovered from
/// the means so it carries no penalty.
pub fn fit_ridge(xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(RegressorError::InvalidInput(format!("ridge lambda must be finite and >= 0, got {lambda}")));
    }
    let d = check_xy(xs, ys)?;
    let n = xs.len();
    let nf = n as f64;
    let mut x_mean = vec![0.0; d];
    for row in xs {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= nf);
    let y_mean = ys.iter().sum::<f64>() / nf;

    let xc = DMatrix::from_fn(n, d, |i, j| xs[i][j] - x_mean[j]);
    let yc = DVector::from_iterator(n, ys.iter().map(|y| y - y_mean));
    let mut gram = xc.tr_mul(&xc);
    for j in 0..d {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.tr_mul(&yc);
    let chol = gram.cholesky().ok_or(RegressorError::Numerical)?;
    let beta = chol.solve(&rhs);
    let coefficients = beta.as_slice().to_vec();
    let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel { coefficients, intercept, ridge_lambda: lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys = xs
            .iter()
            .map(|x| x.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v).sum::<f64>() + 0.5 + rng.gen_range(-0.1..0.1))
            .collect();
        (xs, ys)
    }

    // Gaussian elimination with partial pivoting on the normal equations.
    fn normal_equations(xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
        let p = xs[0].len() + 1;
        let row = |x: &Vec<f64>| x.iter().cloned().chain(std::iter::once(1.0)).collect::<Vec<_>>();
        let mut m = vec![vec![0.0; p + 1]; p];
        for (x, y) in xs.iter().zip(ys) {
            let r = row(x);
            for i in 0..p {
                for j in 0..p {
                    m[i][j] += r[i] * r[j];
                }
                m[i][p] += r[i] * y;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, piv);
            for r in c + 1..p {
                let f = m[r][c] / m[c][c];
                for k in c..=p {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
        let mut sol = vec![0.0; p];
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|k| m[i][k] * sol[k]).sum();
            sol[i] = (m[i][p] - s) / m[i][i];
        }
        sol
    }

    #[test]
    fn exact_affine_recovery() {
        let (xs, _) = fixture(30, 3, 1);
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - x[1] + 0.25 * x[2] + 4.0).collect();
        let m = fit_ols(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((m.predict(x) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn two_point_line() {
        let xs = vec![vec![1.0], vec![2.0], vec![3.0]];
        let ys = vec![3.0, 5.0, 7.0];
        let m = fit_ols(&xs, &ys).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((m.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations() {
        let (xs, ys) = fixture(50, 5, 2);
        let m = fit_ols(&xs, &ys).unwrap();
        let sol = normal_equations(&xs, &ys);
        for j in 0..5 {
            assert!((m.coefficients[j] - sol[j]).abs() < 1e-8);
        }
        assert!((m.intercept - sol[5]).abs() < 1e-8);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let (mut xs, ys) = fixture(20, 2, 3);
        for x in &mut xs {
            let v = x[0];
            x.push(2.0 * v);
        }
        assert!(matches!(fit_ols(&xs, &ys), Err(RegressorError::RankDeficient { rank: 3, cols: 4 })));
        let too_few = fit_ols(&xs[..3], &ys[..3]);
        assert!(matches!(too_few, Err(RegressorError::Underdetermined { .. })));
    }

    #[test]
    fn ridge_limits() {
        let (xs, ys) = fixture(60, 4, 4);
        let ols = fit_ols(&xs, &ys).unwrap();
        let r0 = fit_ridge(&xs, &ys, 0.0).unwrap();
        let diff: f64 = ols.coefficients.iter().zip(&r0.coefficients).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff < 1e-8);
        assert!((ols.intercept - r0.intercept).abs() < 1e-8);

        let big = fit_ridge(&xs, &ys, 1e12).unwrap();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!(big.coefficient_norm() < 1e-8);
        assert!((big.intercept - mean).abs() < 1e-6);
        assert!(fit_ridge(&xs, &ys, -1.0).is_err());
    }

    #[test]
    fn duplicated_column_splits_evenly() {
        // duplicating a column halves the effective penalty on its total weight
        let (xs, ys) = fixture(40, 1, 5);
        let dup: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0], x[0]]).collect();
        let single = fit_ridge(&xs, &ys, 0.05).unwrap();
        let r = fit_ridge(&dup, &ys, 0.1).unwrap();
        assert!((r.coefficients[0] - r.coefficients[1]).abs() < 1e-9);
        assert!((r.coefficients[0] + r.coefficients[1] - single.coefficients[0]).abs() < 1e-9);
        let ols = fit_ols(&xs, &ys).unwrap();
        let tiny = fit_ridge(&dup, &ys, 1e-6).unwrap();
        assert!((tiny.coefficients[0] - 0.5 * ols.coefficients[0]).abs() < 1e-6);
    }

    #[test]
    fn ridge_norm_shrinks_with_lambda() {
        let (xs, ys) = fixture(80, 6, 6);
        let mut last = f64::INFINITY;
        for l in [0.0, 1e-3, 1e-2, 1e-1, 1.0, 1e2, 1e3, 1e4] {
            let norm = fit_ridge(&xs, &ys, l).unwrap().coefficient_norm();
            assert!(norm <= last + 1e-12);
            last = norm;
        }
    }
}
