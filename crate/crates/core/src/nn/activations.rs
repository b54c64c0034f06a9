//! Scalar and vector activations shared by the tape and by plain inference code.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Rectifier,
    Sigmoid,
    Softplus,
    Softmax,
    LogSumExp,
}

impl Activation {
    /// Applies the activation. `LogSumExp` reduces to a single value.
    pub fn apply(self, input: &[f64]) -> Vec<f64> {
        match self {
            Activation::Rectifier => input.iter().map(|&x| relu(x)).collect(),
            Activation::Sigmoid => input.iter().map(|&x| sigmoid(x)).collect(),
            Activation::Softplus => input.iter().map(|&x| softplus(x)).collect(),
            Activation::Softmax => softmax(input),
            Activation::LogSumExp => vec![log_sum_exp(input)],
        }
    }
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|&x| x - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(Activation::Sigmoid.apply(&[0.0]), vec![0.5]);
    }

    #[test]
    fn uniform_softmax() {
        for p in Activation::Softmax.apply(&[0.0; 5]) {
            assert_abs_diff_eq!(p, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn log_sum_exp_large_inputs() {
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert_abs_diff_eq!(v, 1000.0 + std::f64::consts::LN_2, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 1000.693147, epsilon = 1e-6);
    }

    #[test]
    fn rectifier_and_softplus() {
        assert_eq!(Activation::Rectifier.apply(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_abs_diff_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(softplus(800.0), 800.0, epsilon = 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(xs in prop::collection::vec(-15.0f64..15.0, 1..12)) {
            let p = softmax(&xs);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12);
            for v in p {
                prop_assert!(v > 0.0 && (v < 1.0 || xs.len() == 1));
            }
        }

        #[test]
        fn log_sum_exp_shift(xs in prop::collection::vec(-30.0f64..30.0, 1..10)) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + 1000.0).collect();
            prop_assert!((log_sum_exp(&xs) - (log_sum_exp(&shifted) - 1000.0)).abs() <= 1e-9);
        }
    }
}
