use super::OptionKind;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Black-Scholes price of a European option on a non-dividend-paying
/// underlying, written in forward form: `e^{-rT} [F N(d1) - K N(d2)]`.
pub fn bs_price(kind: OptionKind, forward: f64, strike: f64, rate: f64, tau: f64, vol: f64) -> f64 {
    let df = (-rate * tau).exp();
    let sd = vol * tau.sqrt();
    if sd <= 0.0 {
        let intrinsic = match kind {
            OptionKind::Call => (forward - strike).max(0.0),
            OptionKind::Put => (strike - forward).max(0.0),
        };
        return df * intrinsic;
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    match kind {
        OptionKind::Call => df * (forward * normal_cdf(d1) - strike * normal_cdf(d2)),
        OptionKind::Put => df * (strike * normal_cdf(-d2) - forward * normal_cdf(-d1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn textbook_call_value() {
        // S=100, K=100, r=5%, T=1, vol=20%: 10.4506
        let f = 100.0 * 0.05f64.exp();
        let c = bs_price(OptionKind::Call, f, 100.0, 0.05, 1.0, 0.2);
        assert!((c - 10.450583572185565).abs() < 1e-9);
    }

    #[test]
    fn parity_holds() {
        let (f, k, r, t, v) = (2010.0, 1990.0, 0.02, 0.1, 0.25);
        let c = bs_price(OptionKind::Call, f, k, r, t, v);
        let p = bs_price(OptionKind::Put, f, k, r, t, v);
        assert!((c - p - (-r * t).exp() * (f - k)).abs() < 1e-10);
    }
}
