//! Discrete-time Hawkes intensity, finite-population discount and the
//! Poisson negative log-likelihood.
//!
//! Lag weights are indexed `0..L`; weight `L - i` multiplies the count `i`
//! days ago, so `w[L-1]` applies to yesterday.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to the discounted intensity before taking its log.
pub const LAMBDA_FLOOR: f64 = 1e-8;

pub fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow for large x or cancellation for small x
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive `y`.
pub fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1)
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Simplex-constrained lag weights, parameterized by unconstrained logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagWeights {
    pub logits: Vec<f64>,
}

impl LagWeights {
    pub fn uniform(lag: usize) -> Self {
        LagWeights {
            logits: vec![0.0; lag],
        }
    }

    /// Logits reproducing a target simplex vector (entries must be > 0).
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        check_simplex(weights)?;
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Argument(
                "logit parameterization needs strictly positive weights".into(),
            ));
        }
        Ok(LagWeights {
            logits: weights.iter().map(|w| w.ln()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

/// Validates that `weights` is non-empty, non-negative and sums to one.
pub fn check_simplex(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Argument("lag weights are empty".into()));
    }
    if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
        return Err(Error::Argument("lag weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Argument(format!(
            "lag weights must sum to 1, got {total}"
        )));
    }
    Ok(())
}

/// Non-negative base rate μ = softplus(raw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRate {
    pub raw: f64,
}

impl BaseRate {
    pub fn from_mu(mu: f64) -> Self {
        BaseRate {
            raw: softplus_inv(mu),
        }
    }

    pub fn mu(&self) -> f64 {
        softplus(self.raw)
    }
}

/// λ(t) = μ + Σ_{i=1}^{L} w(L−i)·R(t−i)·C(t−i).
///
/// `r_window[i-1]` and `c_window[i-1]` hold R(t−i) and C(t−i).
pub fn intensity(mu: f64, weights: &[f64], r_window: &[f64], c_window: &[f64]) -> Result<f64> {
    let lag = weights.len();
    for (what, len) in [("R window", r_window.len()), ("count window", c_window.len())] {
        if len != lag {
            return Err(Error::Shape {
                what,
                expected: lag,
                actual: len,
            });
        }
    }
    let excitation: f64 = (1..=lag)
        .map(|i| weights[lag - i] * r_window[i - 1] * c_window[i - 1])
        .sum();
    Ok(mu + excitation)
}

/// Remaining susceptible fraction 1 − (N(t−1) + V(t−1)) / N.
pub fn susceptible_fraction(n_prev: f64, v_prev: f64, population: f64) -> Result<f64> {
    if !(population > 0.0) {
        return Err(Error::Domain(format!("population must be positive, got {population}")));
    }
    let removed = n_prev + v_prev;
    if removed < 0.0 || removed > population {
        return Err(Error::Domain(format!(
            "infected plus vaccinated ({removed}) outside [0, population={population}]"
        )));
    }
    Ok(1.0 - removed / population)
}

/// λ̃(t) = (1 − (N(t−1) + V(t−1)) / N)·λ(t).
pub fn discount(lambda: f64, n_prev: f64, v_prev: f64, population: f64) -> Result<f64> {
    Ok(susceptible_fraction(n_prev, v_prev, population)? * lambda)
}

/// Poisson negative log-likelihood of `count` under mean `lambda_tilde`,
/// without the ln(c!) constant: λ̃ − c·ln λ̃, with λ̃ floored at
/// [`LAMBDA_FLOOR`].
pub fn poisson_nll(lambda_tilde: f64, count: f64) -> f64 {
    let lam = lambda_tilde.max(LAMBDA_FLOOR);
    if count == 0.0 {
        lam
    } else {
        lam - count * lam.ln()
    }
}

/// d/dλ̃ of [`poisson_nll`]; zero where the floor is active.
pub fn poisson_nll_grad(lambda_tilde: f64, count: f64) -> f64 {
    if lambda_tilde > LAMBDA_FLOOR {
        1.0 - count / lambda_tilde
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn intensity_without_excitation_is_mu() {
        let w = [0.2, 0.3, 0.5];
        assert_eq!(intensity(1.5, &w, &[1.0; 3], &[0.0; 3]).unwrap(), 1.5);
    }

    #[test]
    fn intensity_hand_example() {
        let w = [0.2, 0.3, 0.5];
        let c = [30.0, 20.0, 10.0];
        let v = intensity(1.0, &w, &[1.0; 3], &c).unwrap();
        assert!((v - 24.0).abs() < 1e-12);
        let v0 = intensity(0.0, &w, &[1.0; 3], &c).unwrap();
        assert!((v0 - 23.0).abs() < 1e-12);
        let v2 = intensity(0.0, &w, &[2.0; 3], &c).unwrap();
        assert!((v2 - 46.0).abs() < 1e-12);
    }

    #[test]
    fn intensity_shape_error() {
        let err = intensity(1.0, &[0.5, 0.5], &[1.0], &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Shape { expected: 2, actual: 1, .. }));
    }

    #[test]
    fn discount_examples() {
        assert_eq!(discount(24.0, 0.0, 0.0, 1000.0).unwrap(), 24.0);
        assert_eq!(discount(24.0, 600.0, 400.0, 1000.0).unwrap(), 0.0);
        assert!((discount(24.0, 100.0, 100.0, 1000.0).unwrap() - 19.2).abs() < 1e-12);
        assert!(matches!(
            discount(1.0, 600.0, 401.0, 1000.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn nll_examples() {
        assert_eq!(poisson_nll(1.0, 0.0), 1.0);
        let v = poisson_nll(2.0, 3.0);
        assert!((v - (2.0 - 3.0 * 2f64.ln())).abs() < 1e-15);
        assert!((v - (-0.0794)).abs() < 1e-4);
        // floor keeps the log finite
        assert!(poisson_nll(0.0, 3.0).is_finite());
    }

    #[test]
    fn softplus_limits() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(20.0) - 20.0).abs() < 1e-8);
        assert!((softplus(-20.0) - (-20f64).exp().ln_1p()).abs() < 1e-24);
        for y in [1e-6, 0.3, 2.0, 45.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-9 * y.max(1.0));
        }
    }

    proptest! {
        #[test]
        fn softmax_is_on_simplex(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let w = LagWeights { logits }.weights();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn intensity_at_least_mu(
            mu in 0.0f64..10.0,
            logits in prop::collection::vec(-5.0f64..5.0, 5),
            r in prop::collection::vec(0.0f64..3.0, 5),
            c in prop::collection::vec(0.0f64..100.0, 5),
        ) {
            let w = softmax(&logits);
            let lam = intensity(mu, &w, &r, &c).unwrap();
            prop_assert!(lam >= mu);
            // linear in each R(t-i)
            let mut r2 = r.clone();
            r2[2] *= 2.0;
            let lam2 = intensity(mu, &w, &r2, &c).unwrap();
            let expected = lam + w[5 - 3] * r[2] * c[2];
            prop_assert!((lam2 - expected).abs() < 1e-9 * lam2.max(1.0));
        }

        #[test]
        fn nll_minimized_at_count(c in 1u32..500, scale in 0.05f64..20.0) {
            let c = c as f64;
            let at_min = poisson_nll(c, c);
            prop_assert!((at_min - (c - c * c.ln())).abs() < 1e-9 * c.max(1.0));
            prop_assert!(poisson_nll(c * scale, c) >= at_min - 1e-9);
        }
    }
}
