//! Distance functions applied to a pairwise score difference `x = s_v - s_u`,
//! where `u` is a positive sample and `v` a sample that should rank below it.
//!
//! All three variants are monotone non-decreasing in `x`:
//!
//! - [`DistanceFunction::PiecewiseStep`]: `0` below `-delta`, `x / (2 delta) + 1/2`
//!   on `[-delta, delta]`, `1` above `delta`. Continuous everywhere.
//! - [`DistanceFunction::Sigmoid`]: `1 / (1 + exp(-lambda x))`.
//! - [`DistanceFunction::CeSigmoid`]: `-(1/lambda) ln(1 - S(x))`, the binary
//!   cross entropy of the sigmoid against label 0, scaled by `1/lambda`. Its
//!   derivative with respect to `x` is exactly `S(x)`.
//!
//! The cross-entropy value is clamped: `1 - S(x)` is floored at
//! [`CE_FLOOR`] before the logarithm, so the value never exceeds
//! `-ln(CE_FLOOR) / lambda` (about `69.08 / lambda`). The reported derivative
//! is always the unclamped `S(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to `1 - S(x)` before taking its logarithm.
pub const CE_FLOOR: f64 = 1e-30;

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DistanceFunction {
    PiecewiseStep { delta: f64 },
    Sigmoid { lambda: f64 },
    CeSigmoid { lambda: f64 },
}

impl Default for DistanceFunction {
    fn default() -> Self {
        DistanceFunction::CeSigmoid {
            lambda: DEFAULT_LAMBDA,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl DistanceFunction {
    pub fn piecewise_step(delta: f64) -> Result<Self> {
        check_positive("delta", delta)?;
        Ok(Self::PiecewiseStep { delta })
    }

    pub fn sigmoid(lambda: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        Ok(Self::Sigmoid { lambda })
    }

    pub fn ce_sigmoid(lambda: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        Ok(Self::CeSigmoid { lambda })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::PiecewiseStep { delta } => check_positive("delta", delta),
            Self::Sigmoid { lambda } | Self::CeSigmoid { lambda } => {
                check_positive("lambda", lambda)
            }
        }
    }

    pub fn is_ce(&self) -> bool {
        matches!(self, Self::CeSigmoid { .. })
    }

    /// `D(x)`.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::PiecewiseStep { delta } => step(x, delta),
            Self::Sigmoid { lambda } => logistic(lambda * x),
            Self::CeSigmoid { lambda } => ce_value(x, lambda),
        }
    }

    /// `dD/dx`. The derivative with respect to the positive's score is the
    /// negation of this, and with respect to the other sample's score it is
    /// this value unchanged.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Self::PiecewiseStep { delta } => {
                if (-delta..=delta).contains(&x) {
                    0.5 / delta
                } else {
                    0.0
                }
            }
            Self::Sigmoid { lambda } => {
                let s = logistic(lambda * x);
                lambda * s * (1.0 - s)
            }
            Self::CeSigmoid { lambda } => logistic(lambda * x),
        }
    }

    /// The soft rank indicator used when counting how many samples outrank
    /// a positive. Equals [`value`](Self::value) for the bounded variants and
    /// the underlying sigmoid for the cross-entropy variant.
    pub fn rank_indicator(&self, x: f64) -> f64 {
        match *self {
            Self::CeSigmoid { lambda } => logistic(lambda * x),
            _ => self.value(x),
        }
    }
}

/// Logistic function in the branch-on-sign form; never overflows.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn step(x: f64, delta: f64) -> f64 {
    if x < -delta {
        0.0
    } else if x > delta {
        1.0
    } else {
        x / (2.0 * delta) + 0.5
    }
}

fn ce_value(x: f64, lambda: f64) -> f64 {
    // -ln(1 - S(x)) = -ln S(-x) = softplus(lambda x)
    softplus(lambda * x).min(-CE_FLOOR.ln()) / lambda
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("argument must be finite, got {x}")))
    }
}

/// Piecewise step `H(x)` with slope parameter `delta`.
pub fn piecewise_step(x: f64, delta: f64) -> Result<f64> {
    check_finite(x)?;
    check_positive("delta", delta)?;
    Ok(step(x, delta))
}

/// Sigmoid distance `S(x) = 1 / (1 + exp(-lambda x))`.
pub fn sigmoid_distance(x: f64, lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    if x.is_nan() {
        return Err(Error::invalid("argument is NaN"));
    }
    Ok(logistic(lambda * x))
}

/// Cross-entropy sigmoid distance and its derivative with respect to the
/// positive's score, `-S(x)`.
pub fn ce_sigmoid_distance(x: f64, lambda: f64) -> Result<(f64, f64)> {
    check_positive("lambda", lambda)?;
    check_finite(x)?;
    Ok((ce_value(x, lambda), -logistic(lambda * x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn step_examples() {
        assert_eq!(piecewise_step(-1.0, 0.5).unwrap(), 0.0);
        assert_eq!(piecewise_step(0.0, 0.5).unwrap(), 0.5);
        assert_eq!(piecewise_step(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(piecewise_step(-0.5, 0.5).unwrap(), 0.0);
        assert!(piecewise_step(f64::NAN, 0.5).is_err());
        assert!(piecewise_step(0.0, 0.0).is_err());
        assert!(piecewise_step(0.0, -1.0).is_err());
    }

    #[test]
    fn step_converges_to_heaviside() {
        let delta = 1e-9;
        for &x in &[-1.0, -1e-3, -2e-6, 2e-6, 1e-3, 1.0] {
            let heaviside = if x > 0.0 { 1.0 } else { 0.0 };
            assert_eq!(piecewise_step(x, delta).unwrap(), heaviside);
        }
        assert_eq!(piecewise_step(0.0, delta).unwrap(), 0.5);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_distance(0.0, 8.0).unwrap(), 0.5);
        // 1 / (1 + e^-2)
        let expected = 0.880_797_077_977_882_3;
        assert!((sigmoid_distance(0.25, 8.0).unwrap() - expected).abs() < 1e-15);
        assert_eq!(sigmoid_distance(1e6, 8.0).unwrap(), 1.0);
        assert_eq!(sigmoid_distance(-1e6, 8.0).unwrap(), 0.0);
        assert!(sigmoid_distance(1.0, 0.0).is_err());
    }

    #[test]
    fn ce_examples() {
        let (v, d) = ce_sigmoid_distance(0.0, 8.0).unwrap();
        assert!((v - std::f64::consts::LN_2 / 8.0).abs() < 1e-15);
        assert!((v - 0.086_643).abs() < 1e-6);
        assert_eq!(d, -0.5);

        let (v, d) = ce_sigmoid_distance(-10.0, 8.0).unwrap();
        assert!((0.0..1e-30).contains(&v));
        assert!(d.abs() < 1e-30);
    }

    #[test]
    fn ce_value_is_clamped() {
        let (v, d) = ce_sigmoid_distance(1e6, 8.0).unwrap();
        assert!(v.is_finite());
        assert!((v - (-CE_FLOOR.ln()) / 8.0).abs() < 1e-12);
        assert_eq!(d, -1.0);
    }

    #[test]
    fn ce_derivative_matches_central_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for i in 0..1000 {
            let x: f64 = rng.random_range(-3.0..3.0);
            let lambda = [2.0, 4.0, 8.0, 16.0][i % 4];
            let (_, d_du) = ce_sigmoid_distance(x, lambda).unwrap();
            // the positive's score enters as x = s_v - s_u, so d/ds_u = -d/dx
            let f = |x: f64| ce_sigmoid_distance(x, lambda).unwrap().0;
            let fd = -(f(x + h) - f(x - h)) / (2.0 * h);
            let rel = (d_du - fd).abs() / d_du.abs().max(fd.abs());
            assert!(rel < 1e-6, "x={x} lambda={lambda} rel={rel}");
        }
    }

    proptest! {
        #[test]
        fn codomain_and_monotonicity(a in -50.0f64..50.0, b in -50.0f64..50.0, p in 0.01f64..20.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for d in [
                DistanceFunction::PiecewiseStep { delta: p },
                DistanceFunction::Sigmoid { lambda: p },
                DistanceFunction::CeSigmoid { lambda: p },
            ] {
                let (vl, vh) = (d.value(lo), d.value(hi));
                prop_assert!(vl <= vh);
                prop_assert!(vl >= 0.0);
                if !d.is_ce() {
                    prop_assert!(vh <= 1.0);
                }
            }
        }

        #[test]
        fn sigmoid_symmetry(x in -100.0f64..100.0, lambda in 0.1f64..20.0) {
            let s = sigmoid_distance(x, lambda).unwrap() + sigmoid_distance(-x, lambda).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_names() {
        let d: DistanceFunction =
            serde_json::from_str(r#"{"type":"ce_sigmoid","lambda":8}"#).unwrap();
        assert_eq!(d, DistanceFunction::CeSigmoid { lambda: 8.0 });
        let d: DistanceFunction =
            serde_json::from_str(r#"{"type":"piecewise_step","delta":0.5}"#).unwrap();
        assert_eq!(d, DistanceFunction::PiecewiseStep { delta: 0.5 });
    }
}
