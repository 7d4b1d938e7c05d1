//! Closed-form loss laws.
//!
//! All losses are per-token cross-entropy in nats. `N` is the total
//! non-embedding, non-routing parameter count; converting a shape to `N`
//! belongs to [`crate::shapes`].

use serde::{Deserialize, Serialize};

use crate::error::{ensure_at_least_one, ensure_nonnegative, ensure_positive, Error, Result};

/// `L(N, D) = c + a / N^alpha + b / D^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseCoefficients {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub c: f64,
}

/// `L(N, D, G) = c + (g / G^gamma + a) / N^alpha + b / D^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoeCoefficients {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
    pub g: f64,
    pub gamma: f64,
    pub c: f64,
}

/// Fixed-dataset law for routed models, `(10^(d/a) / N)^a · (1/E)^(b + c log10 N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClarkCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Loss at fixed `(N, D)` as a function of granularity only:
/// `g_nd / G^gamma + h_nd`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GranularitySlice {
    pub g_nd: f64,
    pub gamma: f64,
    /// Asymptote as `G -> inf`.
    pub h_nd: f64,
}

impl GranularitySlice {
    pub fn eval(&self, granularity: f64) -> f64 {
        self.g_nd / granularity.powf(self.gamma) + self.h_nd
    }
}

impl DenseCoefficients {
    /// Fitted dense coefficients for the E=64 study.
    pub const PUBLISHED: Self = Self {
        a: 16.3,
        alpha: 0.126,
        b: 26.7,
        beta: 0.127,
        c: 0.47,
    };

    pub fn validate(&self) -> Result<()> {
        ensure_positive("a", self.a)?;
        ensure_positive("alpha", self.alpha)?;
        ensure_positive("b", self.b)?;
        ensure_positive("beta", self.beta)?;
        ensure_nonnegative("c", self.c)
    }
}

impl MoeCoefficients {
    /// Fitted coefficients for E=64.
    pub const PUBLISHED_E64: Self = Self {
        a: 18.1,
        alpha: 0.115,
        b: 30.8,
        beta: 0.147,
        g: 2.1,
        gamma: 0.58,
        c: 0.47,
    };

    /// E=64 coefficients refitted with the lowest-loss 20% of runs held out.
    pub const PUBLISHED_E64_HOLDOUT: Self = Self {
        a: 17.6,
        alpha: 0.114,
        b: 26.7,
        beta: 0.140,
        g: 2.07,
        gamma: 0.570,
        c: 0.472,
    };

    /// Fitted coefficients for E=16.
    pub const PUBLISHED_E16: Self = Self {
        a: 19.64,
        alpha: 0.124,
        b: 57.07,
        beta: 0.169,
        g: 1.18,
        gamma: 0.986,
        c: 0.472,
    };

    pub fn validate(&self) -> Result<()> {
        ensure_positive("a", self.a)?;
        ensure_positive("alpha", self.alpha)?;
        ensure_positive("b", self.b)?;
        ensure_positive("beta", self.beta)?;
        ensure_positive("g", self.g)?;
        ensure_positive("gamma", self.gamma)?;
        ensure_nonnegative("c", self.c)
    }

    /// Granularity-dependent numerator of the `N` term, `g / G^gamma + a`.
    pub fn a_of_granularity(&self, granularity: f64) -> f64 {
        self.g / granularity.powf(self.gamma) + self.a
    }
}

impl ClarkCoefficients {
    pub fn validate(&self) -> Result<()> {
        if self.a == 0.0 || !self.a.is_finite() {
            return Err(Error::domain("clark coefficient a must be nonzero and finite"));
        }
        if ![self.b, self.c, self.d].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("clark coefficients must be finite"));
        }
        Ok(())
    }
}

fn check_nd(n: f64, tokens: f64) -> Result<()> {
    ensure_positive("N", n)?;
    ensure_positive("D", tokens)
}

pub fn moe_loss(n: f64, tokens: f64, granularity: f64, coeffs: &MoeCoefficients) -> Result<f64> {
    check_nd(n, tokens)?;
    ensure_at_least_one("G", granularity)?;
    Ok(coeffs.c + coeffs.a_of_granularity(granularity) / n.powf(coeffs.alpha) + coeffs.b / tokens.powf(coeffs.beta))
}

pub fn dense_loss(n: f64, tokens: f64, coeffs: &DenseCoefficients) -> Result<f64> {
    check_nd(n, tokens)?;
    Ok(coeffs.c + coeffs.a / n.powf(coeffs.alpha) + coeffs.b / tokens.powf(coeffs.beta))
}

pub fn clark_loss(n: f64, expansion: f64, coeffs: &ClarkCoefficients) -> Result<f64> {
    ensure_positive("N", n)?;
    ensure_at_least_one("E", expansion)?;
    coeffs.validate()?;
    let scale = (10f64.powf(coeffs.d / coeffs.a) / n).powf(coeffs.a);
    let exponent = coeffs.b + coeffs.c * n.log10();
    Ok(scale * (1.0 / expansion).powf(exponent))
}

/// Decomposes the joint law at fixed `(N, D)` into a pure power law in `G`
/// plus a constant.
pub fn granularity_slice(n: f64, tokens: f64, coeffs: &MoeCoefficients) -> Result<GranularitySlice> {
    check_nd(n, tokens)?;
    let n_term = n.powf(coeffs.alpha);
    Ok(GranularitySlice {
        g_nd: coeffs.g / n_term,
        gamma: coeffs.gamma,
        h_nd: coeffs.c + coeffs.a / n_term + coeffs.b / tokens.powf(coeffs.beta),
    })
}

/// Display helper; nothing else in the crate works in perplexity.
pub fn perplexity(loss: f64) -> f64 {
    loss.exp()
}

/// A loss law usable by the budget optimizer. Dense laws ignore `G`.
pub trait LossLaw: Sync {
    fn loss(&self, n_total: f64, tokens: f64, granularity: f64) -> Result<f64>;
    /// Infimum of the law as `N, D -> inf`.
    fn irreducible(&self) -> f64;
}

impl LossLaw for MoeCoefficients {
    fn loss(&self, n_total: f64, tokens: f64, granularity: f64) -> Result<f64> {
        moe_loss(n_total, tokens, granularity, self)
    }

    fn irreducible(&self) -> f64 {
        self.c
    }
}

impl LossLaw for DenseCoefficients {
    fn loss(&self, n_total: f64, tokens: f64, _granularity: f64) -> Result<f64> {
        dense_loss(n_total, tokens, self)
    }

    fn irreducible(&self) -> f64 {
        self.c
    }
}
