//! The activation/PGF duality: probability generating functions built from
//! squared Hermite coefficients, offspring moments, extinction probabilities,
//! phase classification, and the parametric PGF families.

use crate::hermite::ActivationSpec;
use crate::{Error, Result, NORM_TOL_EXACT, PGF_MASS_TOL};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Degree cap growth limit when expanding analytic families to tail < 1e-12.
const FAMILY_TAIL_TARGET: f64 = 1e-12;
const FAMILY_MAX_DEGREE: usize = 20_000;

/// A probability generating function given by a truncated coefficient
/// sequence. `tail_mass` carries the probability sitting above `degree_cap`
/// for analytic families; it is attributed to degree `degree_cap + 1` during
/// evaluation so that `G(1) = 1` holds without renormalizing (renormalizing
/// would bias the offspring mean).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Pgf {
    pub family: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub degree_cap: usize,
    pub coefficients: Vec<f64>,
    pub tail_mass: f64,
}

impl Pgf {
    /// Build from explicit probabilities; the tail is whatever mass is
    /// missing from 1.
    pub fn from_coefficients(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidInput("empty coefficient sequence".into()));
        }
        if let Some(p) = coefficients.iter().find(|p| **p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid probability {p}")));
        }
        let sum: f64 = coefficients.iter().sum();
        if sum > 1.0 + PGF_MASS_TOL {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum} > 1")));
        }
        let degree_cap = coefficients.len() - 1;
        Ok(Self {
            family: None,
            params: BTreeMap::new(),
            degree_cap,
            coefficients,
            tail_mass: (1.0 - sum).max(0.0),
        })
    }

    /// Assemble from parts without the mass check. Used by the parametric
    /// `uniform` family, whose printed generating function has `G(1) != 1`.
    pub(crate) fn from_parts_unchecked(
        family: Option<String>,
        params: BTreeMap<String, f64>,
        coefficients: Vec<f64>,
        tail_mass: f64,
    ) -> Self {
        let degree_cap = coefficients.len() - 1;
        Self { family, params, degree_cap, coefficients, tail_mass }
    }

    /// Unit point mass at `k`.
    pub fn point_mass(k: usize) -> Self {
        let mut coefficients = vec![0.0; k + 1];
        coefficients[k] = 1.0;
        Self::from_coefficients(coefficients).expect("point mass is valid")
    }

    /// `G(s) = exp(lambda (s - 1))`, expanded until the tail is below 1e-12.
    pub fn poisson(lambda: f64) -> Result<Self> {
        if lambda <= 0.0 || lambda.is_nan() {
            return Err(Error::InvalidInput(format!("poisson lambda {lambda} must be > 0")));
        }
        let mut coefficients = Vec::new();
        let mut p = (-lambda).exp();
        let mut cum = 0.0;
        let mut k = 0usize;
        while cum < 1.0 - FAMILY_TAIL_TARGET && k < FAMILY_MAX_DEGREE {
            coefficients.push(p);
            cum += p;
            k += 1;
            p *= lambda / k as f64;
        }
        let mut g = Self::from_coefficients(coefficients)?;
        g.family = Some("poisson".into());
        g.params.insert("lambda".into(), lambda);
        Ok(g)
    }

    /// `G(s) = (1 - p + p s)^n` (finite support, no tail).
    pub fn binomial(n: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("binomial p {p} must be in [0,1]")));
        }
        let mut coefficients = vec![0.0; n + 1];
        for (k, c) in coefficients.iter_mut().enumerate() {
            let mut ln = 0.0;
            for j in 0..k {
                ln += ((n - j) as f64).ln() - ((j + 1) as f64).ln();
            }
            *c = (ln + (k as f64) * p.ln() + ((n - k) as f64) * (1.0 - p).ln()).exp();
            if p == 0.0 {
                *c = if k == 0 { 1.0 } else { 0.0 };
            } else if p == 1.0 {
                *c = if k == n { 1.0 } else { 0.0 };
            }
        }
        let mut g = Self::from_coefficients(coefficients)?;
        g.family = Some("binomial".into());
        g.params.insert("n".into(), n as f64);
        g.params.insert("p".into(), p);
        Ok(g)
    }

    /// `P(Y = k) = (1 - p) p^k`, so `G(s) = (1 - p) / (1 - p s)`.
    pub fn geometric(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("geometric p {p} must be in [0,1)")));
        }
        let mut coefficients = Vec::new();
        let mut mass = 1.0 - p;
        let mut cum = 0.0;
        let mut k = 0usize;
        while cum < 1.0 - FAMILY_TAIL_TARGET && k < FAMILY_MAX_DEGREE {
            coefficients.push(mass);
            cum += mass;
            mass *= p;
            k += 1;
        }
        let mut g = Self::from_coefficients(coefficients)?;
        g.family = Some("geometric".into());
        g.params.insert("p".into(), p);
        Ok(g)
    }

    /// `G(s) = (1 - s^{n+1}) / (n (1 - s))`, i.e. weight `1/n` on each of
    /// `k = 0..=n` -- taken verbatim, even though it gives
    /// `G(1) = (n+1)/n != 1`. Check [`Pgf::normalization_defect`] before
    /// feeding it to operations that assume unit mass.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("uniform family needs n >= 1".into()));
        }
        let coefficients = vec![1.0 / n as f64; n + 1];
        let mut params = BTreeMap::new();
        params.insert("n".into(), n as f64);
        Ok(Self::from_parts_unchecked(Some("uniform".into()), params, coefficients, 0.0))
    }

    /// How far the total mass is from 1 (nonzero only for the verbatim
    /// uniform family).
    pub fn normalization_defect(&self) -> f64 {
        self.coefficients.iter().sum::<f64>() + self.tail_mass - 1.0
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.coefficients.get(k).copied().unwrap_or(0.0)
    }

    /// Horner evaluation of `G(s)` for `|s| <= 1`, with the tail attributed
    /// to degree `degree_cap + 1`.
    pub fn eval(&self, s: f64) -> f64 {
        assert!(s.abs() <= 1.0 + 1e-9, "pgf evaluated outside [-1,1]: {s}");
        let s = s.clamp(-1.0, 1.0);
        let mut acc = 0.0;
        for &p in self.coefficients.iter().rev() {
            acc = acc * s + p;
        }
        if self.tail_mass > 0.0 {
            acc += self.tail_mass * s.powi(self.degree_cap as i32 + 1);
        }
        acc
    }

    /// `1 - G(1 - u)` for `u` in `[0, 1]`, accurate to relative rounding
    /// even when `u` is within a few ulps of 0: each term
    /// `p_k (1 - (1-u)^k)` goes through `ln_1p`/`exp_m1`, so no
    /// cancellation against 1 ever happens. Survival-side iterations (deep
    /// rescaled kernels) depend on this.
    pub fn complement_eval(&self, u: f64) -> f64 {
        assert!((0.0..=1.0 + 1e-9).contains(&u), "complement outside [0,1]: {u}");
        let u = u.clamp(0.0, 1.0);
        if u == 0.0 {
            return 0.0;
        }
        let log1m = (-u).ln_1p();
        let mut acc = 0.0;
        for (k, &p) in self.coefficients.iter().enumerate().skip(1) {
            if p != 0.0 {
                acc += p * -(k as f64 * log1m).exp_m1();
            }
        }
        if self.tail_mass > 0.0 {
            acc += self.tail_mass * -((self.degree_cap + 1) as f64 * log1m).exp_m1();
        }
        acc
    }

    /// Offspring mean `mu = sum k p_k` (tail ignored; it only raises mu).
    pub fn mean(&self) -> f64 {
        self.coefficients.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Offspring variance from the truncated coefficients.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - mu).powi(2) * p)
            .sum()
    }

    /// The size-biased log moment `E[Y log Y] = sum_{k>=2} p_k k log k`
    /// (terms below k = 2 vanish). A positive tail makes this a lower
    /// bound, which the flag records.
    pub fn mustar(&self) -> MustarEstimate {
        let value = self
            .coefficients
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, p)| p * k as f64 * (k as f64).ln())
            .sum();
        MustarEstimate { value, lower_bound_only: self.tail_mass > PGF_MASS_TOL }
    }
}

/// `mu_star` with a flag for truncation-induced underestimation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MustarEstimate {
    pub value: f64,
    pub lower_bound_only: bool,
}

/// Phase of the depth limit, following the supercritical trichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    SubcriticalOrCritical,
    SupercriticalKs,
    /// Requires `mu_star = infinity`; unreachable for any finite coefficient
    /// representation, kept for completeness of the classification.
    SupercriticalHeavy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    pub mu: f64,
    pub mustar: MustarEstimate,
    pub xi: f64,
    pub phase: Phase,
}

/// Dual PGF of a normalized activation: `p_k = a_k^2`.
pub fn pgf_from_activation(spec: &ActivationSpec) -> Result<Pgf> {
    if !spec.is_normalized_within(NORM_TOL_EXACT) {
        return Err(Error::InvalidInput(format!(
            "activation '{}' is not normalized (sum a_k^2 = {})",
            spec.name,
            spec.sum_sq()
        )));
    }
    let coefficients: Vec<f64> = spec.coefficients.iter().map(|a| a * a).collect();
    let sum: f64 = coefficients.iter().sum();
    let degree_cap = coefficients.len() - 1;
    let mut params = BTreeMap::new();
    if let Some(t) = spec.truncated_tail {
        params.insert("truncated_tail".into(), t);
    }
    Ok(Pgf {
        family: Some(format!("dual:{}", spec.name)),
        params,
        degree_cap,
        coefficients,
        tail_mass: (1.0 - sum).max(0.0),
    })
}

/// All-positive square-root realization of a PGF as an activation.
pub fn activation_from_pgf(g: &Pgf) -> Result<ActivationSpec> {
    if g.tail_mass > NORM_TOL_EXACT {
        return Err(Error::InvalidInput(format!(
            "tail mass {} too large to realize as a truncated activation",
            g.tail_mass
        )));
    }
    let coefficients: Vec<f64> = g.coefficients.iter().map(|p| p.sqrt()).collect();
    let name = g.family.clone().unwrap_or_else(|| "pgf".into());
    let mut spec = ActivationSpec::new(format!("sqrt:{name}"), coefficients);
    spec.normalized = true;
    spec.centered = g.prob(0) == 0.0;
    Ok(spec)
}

/// Smallest fixed point of `G(s) = s` on `[0, 1]`, by monotone fixed-point
/// iteration from 0.
pub fn extinction_probability(g: &Pgf) -> Result<f64> {
    if (g.prob(1) - 1.0).abs() < 1e-12 {
        return Err(Error::Degenerate(
            "p_1 = 1: every point is fixed, extinction probability undefined".into(),
        ));
    }
    if g.mean() <= 1.0 {
        return Ok(1.0);
    }
    let mut s = 0.0f64;
    for _ in 0..100_000 {
        let next = g.eval(s);
        if (next - s).abs() <= 1e-12 {
            return Ok(next);
        }
        s = next;
    }
    Err(Error::NonConvergence(format!(
        "extinction fixed-point iteration stalled at s = {s} (residual {})",
        (g.eval(s) - s).abs()
    )))
}

/// Assemble `mu`, `mu_star`, `xi` and the phase label.
pub fn classify_phase(g: &Pgf) -> Result<PhaseReport> {
    let mu = g.mean();
    let mustar = g.mustar();
    let xi = extinction_probability(g)?;
    let phase = if mu <= 1.0 {
        Phase::SubcriticalOrCritical
    } else {
        // A finite representation always has finite mu_star.
        Phase::SupercriticalKs
    };
    Ok(PhaseReport { mu, mustar, xi, phase })
}

/// Residual-connection PGF: convex combination with the linear kernel,
/// `q_1 = (1 - r) p_1 + r`, `q_k = (1 - r) p_k` otherwise. Requires a
/// centered base (`p_0 = 0`).
pub fn resnet_pgf(g: &Pgf, r: f64) -> Result<Pgf> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidInput(format!("residual weight r = {r} outside [0,1]")));
    }
    if g.prob(0) > 1e-12 {
        return Err(Error::InvalidInput(
            "residual PGF requires a centered base (p_0 = 0)".into(),
        ));
    }
    let mut coefficients: Vec<f64> = g.coefficients.iter().map(|p| (1.0 - r) * p).collect();
    if coefficients.len() < 2 {
        coefficients.resize(2, 0.0);
    }
    coefficients[1] += r;
    let mut out = Pgf::from_parts_unchecked(
        g.family.as_ref().map(|f| format!("resnet:{f}")),
        g.params.clone(),
        coefficients,
        (1.0 - r) * g.tail_mass,
    );
    out.params.insert("r".into(), r);
    Ok(out)
}

/// Result of probing `|G(s)| = G(|s|)` on a grid in `(-1, 0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetryCheck {
    pub symmetric: bool,
    pub max_violation: f64,
}

/// Check the PGF symmetry condition on the given grid of negative points.
pub fn check_pgf_symmetry(g: &Pgf, grid: &[f64]) -> SymmetryCheck {
    let mut max_violation = 0.0f64;
    for &s in grid {
        debug_assert!((-1.0..0.0).contains(&s));
        let v = (g.eval(s).abs() - g.eval(s.abs())).abs();
        max_violation = max_violation.max(v);
    }
    SymmetryCheck { symmetric: max_violation <= 1e-10, max_violation }
}

/// Default grid for symmetry checks.
pub fn default_symmetry_grid() -> Vec<f64> {
    (1..20).map(|i| -(i as f64) / 20.0).collect()
}
