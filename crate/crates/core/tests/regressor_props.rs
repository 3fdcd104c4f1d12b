use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volindex::regressors::{
    fit_fnn, fit_forest, fit_ols, fit_ridge, read_model, write_model, FnnConfig, FnnModel, RegressionModel,
};

fn random_net(dim: usize, seed: u64) -> FnnModel {
    let mut m = FnnModel::initialized(dim, seed, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    m.b1.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
    m.shift = rng.gen_range(-1.0..1.0);
    m.scale = rng.gen_range(0.1..3.0);
    m
}

fn points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn local_affine_reproduces_predict_on_1000_inputs() {
    let net = random_net(8, 11);
    for x in points(1000, 8, 12) {
        let a = net.local_affine(&x);
        assert!((a.eval(&x) - net.predict(&x)).abs() < 1e-9);
    }
}

#[test]
fn affine_extrapolates_inside_region() {
    let net = random_net(6, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    for x in points(200, 6, 23) {
        let a = net.local_affine(&x);
        // margin of the nearest kink bounds how far the region extends
        let (z1, o) = net.pre_activations(&x);
        let margin = z1.iter().chain(std::iter::once(&o)).map(|z| z.abs()).fold(f64::INFINITY, f64::min);
        let radius = 0.1 * margin.min(1.0);
        for _ in 0..100 {
            let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(-radius..radius)).collect();
            if net.pattern(&y) != *a.pattern.as_ref().unwrap() {
                continue;
            }
            assert!((a.eval(&y) - net.predict(&y)).abs() < 1e-9);
            checked += 1;
        }
    }
    assert!(checked > 10_000, "only {checked} perturbations stayed in region");
}

#[test]
fn backprop_matches_central_differences() {
    let mut net = random_net(4, 31);
    net.lambda = 0.05;
    let xs = points(25, 4, 32);
    let ts: Vec<f64> = xs.iter().map(|x| x[0].abs() + 0.5 * x[1]).collect();
    let g = net.gradient(&xs, &ts);
    let theta = net.params();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let mut p = net.clone();
        let mut tp = theta.clone();
        tp[k] += h;
        p.set_params(&tp);
        let up = p.objective(&xs, &ts);
        tp[k] -= 2.0 * h;
        p.set_params(&tp);
        let down = p.objective(&xs, &ts);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-8));
    }
    let margin = xs
        .iter()
        .flat_map(|x| {
            let (z, o) = net.pre_activations(x);
            z.into_iter().chain(std::iter::once(o))
        })
        .map(f64::abs)
        .fold(f64::INFINITY, f64::min);
    assert!(margin > 1e-3, "fixture sits on a kink: {margin}");
    assert!(worst < 1e-5, "max relative error {worst}");
}

#[test]
fn forest_has_no_local_affine() {
    let xs = points(60, 3, 41);
    let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[1]).collect();
    let m = RegressionModel::Forest(fit_forest(&xs, &ys, Some(4), 5, 1).unwrap());
    for x in &xs {
        assert!(m.local_affine(x).is_err());
    }
}

#[test]
fn fitted_models_round_trip_through_text() {
    let xs = points(80, 3, 51);
    let ys: Vec<f64> = xs.iter().map(|x| (x[0] + x[2]).max(0.0) + 0.1).collect();
    let cfg = FnnConfig { epochs: 20, ..Default::default() };
    let models = [
        RegressionModel::Linear(fit_ols(&xs, &ys).unwrap()),
        RegressionModel::Linear(fit_ridge(&xs, &ys, 0.3).unwrap()),
        RegressionModel::Fnn(fit_fnn(&xs, &ys, 0.01, &cfg).unwrap()),
        RegressionModel::Forest(fit_forest(&xs, &ys, None, 4, 2).unwrap()),
    ];
    for m in models {
        let back = read_model(&write_model(&m)).unwrap();
        for x in &xs {
            assert_eq!(back.predict(x).unwrap().to_bits(), m.predict(x).unwrap().to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fnn_is_lipschitz(seed in 0u64..1000, a in prop::collection::vec(-3.0f64..3.0, 5), b in prop::collection::vec(-3.0f64..3.0, 5)) {
        let net = random_net(5, seed);
        let gap = (net.predict(&a) - net.predict(&b)).abs();
        prop_assert!(gap <= net.lipschitz_bound() * dist(&a, &b) + 1e-12);
    }

    #[test]
    fn fnn_affine_matches_everywhere(seed in 0u64..1000, x in prop::collection::vec(-3.0f64..3.0, 5)) {
        let net = random_net(5, seed);
        let a = net.local_affine(&x);
        prop_assert!((a.eval(&x) - net.predict(&x)).abs() < 1e-9);
        prop_assert!(net.predict(&x) >= net.shift);
    }

    #[test]
    fn ridge_norm_is_monotone(seed in 0u64..500, l1 in 0.0f64..100.0, l2 in 0.0f64..100.0) {
        let xs = points(40, 4, seed);
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x[0] - 2.0 * x[3] + (i as f64 * 0.7).sin()).collect();
        let (lo, hi) = if l1 < l2 { (l1, l2) } else { (l2, l1) };
        let a = fit_ridge(&xs, &ys, lo).unwrap().coefficient_norm();
        let b = fit_ridge(&xs, &ys, hi).unwrap().coefficient_norm();
        prop_assert!(b <= a + 1e-10);
    }

    #[test]
    fn ols_residuals_orthogonal(seed in 0u64..500) {
        let xs = points(30, 3, seed);
        let ys: Vec<f64> = xs.iter().map(|x| x[0] * x[1] + x[2]).collect();
        let m = fit_ols(&xs, &ys).unwrap();
        let res: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - m.predict(x)).collect();
        prop_assert!(res.iter().sum::<f64>().abs() < 1e-9);
        for j in 0..3 {
            prop_assert!(xs.iter().zip(&res).map(|(x, r)| x[j] * r).sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn forest_stays_in_target_range(seed in 0u64..200, probe in prop::collection::vec(-10.0f64..10.0, 2)) {
        let xs = points(50, 2, seed);
        let ys: Vec<f64> = xs.iter().map(|x| (x[0] * 3.0).sin() + x[1]).collect();
        let f = fit_forest(&xs, &ys, None, 6, seed).unwrap();
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let p = f.predict(&probe);
        prop_assert!(p >= lo && p <= hi);
    }
}
