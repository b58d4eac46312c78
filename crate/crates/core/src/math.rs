//! Overflow-safe scalar helpers used by the smoothed penalties.

/// `ln(1 + e^x)` without overflow for large `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic function `1 / (1 + e^{-x})`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    if x >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    }
}

/// `ln(e^{-x} + e^{x})`, a smooth upper bound of `|x|`.
#[inline]
pub fn log_sum_exp_pair(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// `sech^2(x)`, computed from `e^{-2|x|}` so it underflows to zero instead of
/// losing precision through `1 - tanh^2`.
#[inline]
pub fn sech_squared(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// `ln(e^x - 1)` for `x > 0`.
#[inline]
pub fn log_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-20.0, -3.0, -0.5, 0.0, 0.5, 3.0, 20.0] {
            let naive = (1.0 + f64::exp(x)).ln();
            assert!((softplus(x) - naive).abs() <= 1e-12 * naive.max(1.0));
        }
        assert_eq!(softplus(-1000.0), 0.0);
        assert_eq!(softplus(1000.0), 1000.0);
    }

    #[test]
    fn sigmoid_symmetry() {
        for &x in &[-800.0, -5.0, 0.0, 1.5, 800.0] {
            let s = sigmoid(x) + sigmoid(-x);
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn lse_pair_is_smooth_abs() {
        assert!((log_sum_exp_pair(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(log_sum_exp_pair(1000.0), 1000.0);
        assert_eq!(log_sum_exp_pair(-1000.0), 1000.0);
        let x: f64 = 1.3;
        let naive = (f64::exp(-x) + f64::exp(x)).ln();
        assert!((log_sum_exp_pair(x) - naive).abs() < 1e-14);
    }

    #[test]
    fn sech_squared_values() {
        assert_eq!(sech_squared(0.0), 1.0);
        let x: f64 = 0.7;
        let expect = 1.0 / x.cosh().powi(2);
        assert!((sech_squared(x) - expect).abs() < 1e-15);
        assert_eq!(sech_squared(1000.0), 0.0);
    }

    #[test]
    fn log_expm1_branches_agree() {
        for &x in &[1e-6_f64, 0.001, 1.0, 29.9, 30.1, 50.0] {
            let naive = if x < 1.0 { x.exp_m1().ln() } else { (f64::exp(x) - 1.0).ln() };
            assert!((log_expm1(x) - naive).abs() <= 1e-12 * naive.abs().max(1.0));
        }
    }
}
