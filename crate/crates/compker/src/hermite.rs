//! Probabilists' Hermite polynomials, built-in activation functions, and
//! Monte-Carlo estimation of Hermite coefficients.
//!
//! All evaluation uses the normalized polynomials `h_k = He_k / sqrt(k!)`,
//! computed by the three-term recurrence with running normalization
//! `h_{k+1}(x) = (x h_k(x) - sqrt(k) h_{k-1}(x)) / sqrt(k+1)`, which stays
//! finite well past the degree where `k!` would overflow.

use crate::rng;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Evaluate the normalized Hermite polynomial `h_k(x)`.
pub fn hermite_eval(k: usize, x: f64) -> f64 {
    debug_assert!(x.is_finite());
    let mut prev = 1.0; // h_0
    if k == 0 {
        return prev;
    }
    let mut cur = x; // h_1
    for j in 1..k {
        let jf = j as f64;
        let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Evaluate `h_0(x) .. h_max(x)` in one recurrence pass.
pub fn hermite_eval_all(max_degree: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if max_degree == 0 {
        return;
    }
    out.push(x);
    for j in 1..max_degree {
        let jf = j as f64;
        let next = (x * out[j] - jf.sqrt() * out[j - 1]) / (jf + 1.0).sqrt();
        out.push(next);
    }
}

/// Normalized Hermite basis truncated at `max_degree`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermiteBasis {
    pub max_degree: usize,
}

impl HermiteBasis {
    pub fn new(max_degree: usize) -> Self {
        Self { max_degree }
    }

    pub fn eval(&self, k: usize, x: f64) -> f64 {
        assert!(k <= self.max_degree, "degree {k} above basis cap {}", self.max_degree);
        hermite_eval(k, x)
    }
}

/// A scalar activation function with a name, usable in Monte-Carlo loops.
#[derive(Clone)]
pub struct ActivationFn {
    pub name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ActivationFn {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `max(0, t)`.
    pub fn relu() -> Self {
        Self::new("relu", |t| t.max(0.0))
    }

    /// `t * Phi(t)` with the standard normal CDF.
    pub fn gelu() -> Self {
        Self::new("gelu", |t| t * normal_cdf(t))
    }

    /// `1 / (1 + e^{-t})`.
    pub fn sigmoid() -> Self {
        Self::new("sigmoid", |t| 1.0 / (1.0 + (-t).exp()))
    }

    /// `t / (1 + e^{-t})`.
    pub fn swish() -> Self {
        Self::new("swish", |t| t / (1.0 + (-t).exp()))
    }

    /// `t` itself; dual to the unit-offspring PGF.
    pub fn identity() -> Self {
        Self::new("identity", |t| t)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Self::relu()),
            "gelu" => Ok(Self::gelu()),
            "sigmoid" => Ok(Self::sigmoid()),
            "swish" => Ok(Self::swish()),
            "identity" => Ok(Self::identity()),
            _ => Err(Error::InvalidInput(format!("unknown activation '{name}'"))),
        }
    }
}

impl std::fmt::Debug for ActivationFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ActivationFn").field("name", &self.name).finish()
    }
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(t / std::f64::consts::SQRT_2))
}

/// A truncated Hermite coefficient sequence representing an activation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ActivationSpec {
    pub name: String,
    pub truncation: usize,
    pub coefficients: Vec<f64>,
    pub centered: bool,
    pub normalized: bool,
    /// Mass dropped above the truncation level, when known (compressed
    /// activations record it so the noised feature variant can re-inject it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated_tail: Option<f64>,
}

impl ActivationSpec {
    pub fn new(name: impl Into<String>, coefficients: Vec<f64>) -> Self {
        let truncation = coefficients.len().saturating_sub(1);
        Self {
            name: name.into(),
            truncation,
            coefficients,
            centered: false,
            normalized: false,
            truncated_tail: None,
        }
    }

    /// The identity activation `h_1`.
    pub fn identity() -> Self {
        let mut s = Self::new("identity", vec![0.0, 1.0]);
        s.centered = true;
        s.normalized = true;
        s
    }

    pub fn sum_sq(&self) -> f64 {
        self.coefficients.iter().map(|a| a * a).sum()
    }

    /// Evaluate the truncated Hermite series at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut prev = 1.0;
        let mut acc = self.coefficients[0];
        if self.coefficients.len() == 1 {
            return acc;
        }
        let mut cur = x;
        acc += self.coefficients[1] * cur;
        for j in 1..self.coefficients.len() - 1 {
            let jf = j as f64;
            let next = (x * cur - jf.sqrt() * prev) / (jf + 1.0).sqrt();
            prev = cur;
            cur = next;
            acc += self.coefficients[j + 1] * cur;
        }
        acc
    }

    /// Scale so the coefficient squares sum to one, without centering.
    pub fn normalize(&self) -> Result<ActivationSpec> {
        let s = self.sum_sq();
        if s <= 0.0 {
            return Err(Error::Degenerate(format!(
                "activation '{}' has zero L2 mass",
                self.name
            )));
        }
        let scale = s.sqrt().recip();
        let mut out = self.clone();
        out.coefficients.iter_mut().for_each(|a| *a *= scale);
        out.normalized = true;
        Ok(out)
    }

    /// Drop the constant term and rescale the rest to unit square sum.
    pub fn center_and_normalize(&self) -> Result<ActivationSpec> {
        let s: f64 = self.coefficients[1..].iter().map(|a| a * a).sum();
        if s <= crate::NORM_TOL_EXACT * crate::NORM_TOL_EXACT {
            return Err(Error::Degenerate(format!(
                "activation '{}' is (numerically) constant: nothing left after centering",
                self.name
            )));
        }
        let scale = s.sqrt().recip();
        let mut out = self.clone();
        out.coefficients[0] = 0.0;
        out.coefficients[1..].iter_mut().for_each(|a| *a *= scale);
        out.centered = true;
        out.normalized = true;
        Ok(out)
    }

    pub fn is_normalized_within(&self, tol: f64) -> bool {
        (self.sum_sq() - 1.0).abs() <= tol
    }
}

/// Monte-Carlo Hermite coefficient estimation: `a_k ~ mean of sigma(x) h_k(x)`
/// over standard normal inputs. Deterministic given the seed; independent of
/// how the sample blocks would be scheduled.
pub fn estimate_coefficients(
    sigma: &ActivationFn,
    truncation: usize,
    samples: usize,
    seed: u64,
) -> Result<ActivationSpec> {
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be >= 1".into()));
    }
    let mut sums = vec![0.0f64; truncation + 1];
    let mut h = Vec::with_capacity(truncation + 1);
    let blocks = samples.div_ceil(rng::BLOCK);
    let mut done = 0usize;
    for b in 0..blocks {
        let mut r = rng::substream(seed, b as u64);
        let n = rng::BLOCK.min(samples - done);
        for _ in 0..n {
            let x = rng::normal(&mut r);
            let s = sigma.eval(x);
            if !s.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "activation '{}' returned a non-finite value at x = {x}",
                    sigma.name
                )));
            }
            hermite_eval_all(truncation, x, &mut h);
            for (acc, hk) in sums.iter_mut().zip(&h) {
                *acc += s * hk;
            }
        }
        done += n;
    }
    let inv = (samples as f64).recip();
    let coefficients = sums.into_iter().map(|s| s * inv).collect();
    Ok(ActivationSpec {
        name: sigma.name.clone(),
        truncation,
        coefficients,
        centered: false,
        normalized: false,
        truncated_tail: None,
    })
}
