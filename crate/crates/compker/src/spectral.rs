//! Spherical-harmonic spectra of composed kernels: dimension-d Legendre
//! polynomials, harmonic-space dimensions, the closed-form eigenvalue
//! series, Gauss-Jacobi quadrature, and the dual activation built from a
//! positive Legendre expansion.

use crate::duality::Pgf;
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::io::Write;

/// Dimension-d Legendre polynomial `P_{k,d}(t)`, normalized so
/// `P_{k,d}(1) = 1`, by the three-term recurrence
/// `(k + d - 2) P_{k+1} = (2k + d - 2) t P_k - k P_{k-1}`.
pub fn legendre_eval(d: usize, k: usize, t: f64) -> f64 {
    debug_assert!(d >= 2 && t.abs() <= 1.0 + 1e-9);
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = t;
    for j in 1..k {
        let jf = j as f64;
        let df = d as f64;
        let next = ((2.0 * jf + df - 2.0) * t * cur - jf * prev) / (jf + df - 2.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `P_{0,d}(t) .. P_{max,d}(t)` in one pass.
pub fn legendre_eval_all(d: usize, max_degree: usize, t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if max_degree == 0 {
        return;
    }
    out.push(t);
    let df = d as f64;
    for j in 1..max_degree {
        let jf = j as f64;
        let next = ((2.0 * jf + df - 2.0) * t * out[j] - jf * out[j - 1]) / (jf + df - 2.0);
        out.push(next);
    }
}

fn binom_u128(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.checked_mul(n - j)?;
        acc /= j + 1;
    }
    Some(acc)
}

/// Dimension of the degree-`k` spherical-harmonic space in ambient
/// dimension `d`, in exact integer arithmetic.
pub fn harmonic_dimension(d: usize, k: usize) -> Result<u128> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("need d >= 2, got {d}")));
    }
    if k == 0 {
        return Ok(1);
    }
    let (d, k) = (d as u128, k as u128);
    binom_u128(k + d - 2, k)
        .and_then(|a| binom_u128(k + d - 3, k - 1).and_then(|b| a.checked_add(b)))
        .ok_or_else(|| {
            Error::InvalidInput(format!("harmonic dimension overflows 128-bit for d={d}, k={k}"))
        })
}

/// `N_{k,d}` as a float, falling back to log-Gamma when the exact value
/// overflows.
pub fn harmonic_dimension_f64(d: usize, k: usize) -> f64 {
    match harmonic_dimension(d, k) {
        Ok(v) => v as f64,
        Err(_) => {
            let (d, k) = (d as f64, k as f64);
            let ln_binom = |n: f64, r: f64| ln_gamma(n + 1.0) - ln_gamma(r + 1.0) - ln_gamma(n - r + 1.0);
            ln_binom(k + d - 2.0, k).exp() + ln_binom(k + d - 3.0, k - 1.0).exp()
        }
    }
}

/// `S_{d-2} / S_{d-1} = Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2))`, the
/// normalizer of the weight `(1 - t^2)^{(d-3)/2}` on `[-1, 1]`.
pub fn surface_ratio(d: usize) -> f64 {
    let df = d as f64;
    (ln_gamma(df / 2.0) - ln_gamma((df - 1.0) / 2.0)).exp() / std::f64::consts::PI.sqrt()
}

/// Gauss quadrature nodes and weights for the weight `(1 - t^2)^{(d-3)/2}`.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(t, w)| w * f(*t)).sum()
    }
}

/// Nodes from the symmetric Jacobi matrix (Golub-Welsch); the weight is
/// even, so the diagonal vanishes and the off-diagonal has the closed form
/// `b_n^2 = n (n + 2a) / ((2n + 2a + 1)(2n + 2a - 1))` with `a = (d-3)/2`
/// (`b_1^2 = 1 / (3 + 2a)`).
pub fn gauss_jacobi(points: usize, d: usize) -> Result<Quadrature> {
    if points == 0 || d < 2 {
        return Err(Error::InvalidInput(format!(
            "quadrature needs points >= 1 and d >= 2, got ({points}, {d})"
        )));
    }
    let a = (d as f64 - 3.0) / 2.0;
    let mu0 = (ln_gamma(a + 1.0) - ln_gamma(a + 1.5)).exp() * std::f64::consts::PI.sqrt();
    let mut jacobi = DMatrix::<f64>::zeros(points, points);
    for n in 1..points {
        let nf = n as f64;
        let b_sq = if n == 1 {
            1.0 / (3.0 + 2.0 * a)
        } else {
            nf * (nf + 2.0 * a) / ((2.0 * nf + 2.0 * a + 1.0) * (2.0 * nf + 2.0 * a - 1.0))
        };
        let b = b_sq.sqrt();
        jacobi[(n - 1, n)] = b;
        jacobi[(n, n - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(Quadrature {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Eigenvalues of a composed kernel with multiplicities and sum-rule data.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub dimension: usize,
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<f64>,
    /// `sum_k lambda_k N_{k,d}`; approaches `K(1)` as `k_max` grows.
    pub trace_check: f64,
    /// Generation-distribution mass beyond the degree cap; an unresolved
    /// residual on every eigenvalue.
    pub tail_residual: f64,
}

impl SpectrumReport {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "k,lambda_k,N_k_d,lambda_times_mult")?;
        for (k, (l, m)) in self.eigenvalues.iter().zip(&self.multiplicities).enumerate() {
            writeln!(w, "{k},{l:?},{m:?},{:?}", l * m)?;
        }
        Ok(())
    }
}

/// Closed-form eigenvalue series: over generation sizes `m >= k` of the
/// same parity as `k`,
/// `lambda_k = ratio * sum_m p_m Gamma((d-1)/2) (m!/(m-k)!) 2^{-k}
///             Gamma((m-k+1)/2) / Gamma((m+k+d)/2)`,
/// evaluated in log-Gamma arithmetic.
pub fn eigenvalues(k_max: usize, d: usize, gen_dist: &Pgf) -> Result<SpectrumReport> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("need d >= 2, got {d}")));
    }
    let df = d as f64;
    let ln_prefix = surface_ratio(d).ln() + ln_gamma((df - 1.0) / 2.0);
    let mut eigs = Vec::with_capacity(k_max + 1);
    let mut mults = Vec::with_capacity(k_max + 1);
    let mut trace = 0.0;
    for k in 0..=k_max {
        let kf = k as f64;
        let mut lambda = 0.0f64;
        for (m, &p) in gen_dist.coefficients.iter().enumerate() {
            if m < k || (m - k) % 2 != 0 || p <= 0.0 {
                continue;
            }
            let mf = m as f64;
            // (1 + (-1)^{m-k}) / 2^{k+1} = 2^{-k} at even parity.
            let ln_term = ln_prefix + p.ln() + ln_gamma(mf + 1.0) - ln_gamma(mf - kf + 1.0)
                - kf * std::f64::consts::LN_2
                + ln_gamma((mf - kf + 1.0) / 2.0)
                - ln_gamma((mf + kf + df) / 2.0);
            lambda += ln_term.exp();
        }
        let mult = harmonic_dimension_f64(d, k);
        trace += lambda * mult;
        eigs.push(lambda);
        mults.push(mult);
    }
    Ok(SpectrumReport {
        dimension: d,
        eigenvalues: eigs,
        multiplicities: mults,
        trace_check: trace,
        tail_residual: gen_dist.tail_mass,
    })
}

/// Quadrature oracle for a single eigenvalue:
/// `ratio * integral of K(t) P_{k,d}(t) (1-t^2)^{(d-3)/2}`.
pub fn eigenvalue_by_quadrature(
    kernel: impl Fn(f64) -> f64,
    k: usize,
    d: usize,
    quad: &Quadrature,
) -> f64 {
    surface_ratio(d) * quad.integrate(|t| kernel(t) * legendre_eval(d, k, t))
}

/// A function on `[-1, 1]` expanded in dimension-d Legendre polynomials.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LegendreExpansion {
    pub dimension: usize,
    pub coefficients: Vec<f64>,
}

impl LegendreExpansion {
    pub fn eval(&self, t: f64) -> f64 {
        let mut basis = Vec::new();
        legendre_eval_all(self.dimension, self.coefficients.len() - 1, t, &mut basis);
        self.coefficients.iter().zip(&basis).map(|(c, p)| c * p).sum()
    }

    /// Positive-definiteness on the sphere: every coefficient nonnegative.
    pub fn is_positive_definite(&self, tol: f64) -> bool {
        self.coefficients.iter().all(|c| *c >= -tol)
    }
}

/// Legendre coefficients `alpha_k = N_{k,d} ratio * integral f P_k w`, by
/// adaptive Gauss-Jacobi quadrature: node count doubles from `min_points`
/// until coefficients move less than 1e-10.
pub fn legendre_expand(
    f: impl Fn(f64) -> f64,
    d: usize,
    k_max: usize,
    min_points: usize,
) -> Result<LegendreExpansion> {
    let ratio = surface_ratio(d);
    let mut points = min_points.max(k_max + 1);
    let mut prev: Option<Vec<f64>> = None;
    loop {
        let quad = gauss_jacobi(points, d)?;
        let mut basis = Vec::new();
        let mut coeffs = vec![0.0f64; k_max + 1];
        for (&t, &w) in quad.nodes.iter().zip(&quad.weights) {
            let ft = f(t);
            legendre_eval_all(d, k_max, t, &mut basis);
            for (c, p) in coeffs.iter_mut().zip(&basis) {
                *c += w * ft * p;
            }
        }
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= ratio * harmonic_dimension_f64(d, k);
        }
        if let Some(prev) = &prev {
            let delta = prev
                .iter()
                .zip(&coeffs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if delta < 1e-10 {
                return Ok(LegendreExpansion { dimension: d, coefficients: coeffs });
            }
        }
        if points >= 4096 {
            return Err(Error::NonConvergence(format!(
                "Legendre coefficients still moving at {points} quadrature points"
            )));
        }
        prev = Some(coeffs);
        points *= 2;
    }
}

/// The activation dual to a positive-definite inner-product kernel:
/// `sigma_f(t) = sum sqrt(alpha_k N_{k,d}) P_{k,d}(t)`.
#[derive(Debug, Clone)]
pub struct SphereActivation {
    pub dimension: usize,
    /// `sqrt(alpha_k N_{k,d})` per degree.
    pub coefficients: Vec<f64>,
    /// Quadrature value of the squared-norm integral; 1 for a unit kernel.
    pub l2_norm_sq: f64,
}

impl SphereActivation {
    pub fn eval(&self, t: f64) -> f64 {
        let mut basis = Vec::new();
        legendre_eval_all(self.dimension, self.coefficients.len() - 1, t, &mut basis);
        self.coefficients.iter().zip(&basis).map(|(c, p)| c * p).sum()
    }
}

/// Negative-coefficient tolerance: below it is quadrature noise (clamped),
/// beyond it the kernel is genuinely not positive definite.
pub const PD_TOL: f64 = 1e-8;

pub fn activation_from_kernel(exp: &LegendreExpansion) -> Result<SphereActivation> {
    if let Some((k, c)) = exp
        .coefficients
        .iter()
        .enumerate()
        .find(|(_, c)| **c < -PD_TOL)
    {
        return Err(Error::NotPositiveDefinite(format!(
            "Legendre coefficient alpha_{k} = {c} is negative: the kernel has no \
             real dual activation"
        )));
    }
    let d = exp.dimension;
    let mut alphas: Vec<f64> = exp.coefficients.iter().map(|c| c.max(0.0)).collect();
    let total: f64 = alphas.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("kernel expansion has no mass".into()));
    }
    // Enforce f(1) = sum alpha_k = 1 by rescaling.
    alphas.iter_mut().for_each(|a| *a /= total);
    let coefficients: Vec<f64> = alphas
        .iter()
        .enumerate()
        .map(|(k, a)| (a * harmonic_dimension_f64(d, k)).sqrt())
        .collect();
    let act = SphereActivation { dimension: d, coefficients, l2_norm_sq: 0.0 };
    let quad = gauss_jacobi(2 * act.coefficients.len().max(32), d)?;
    let l2 = surface_ratio(d) * quad.integrate(|t| act.eval(t).powi(2));
    Ok(SphereActivation { l2_norm_sq: l2, ..act })
}
