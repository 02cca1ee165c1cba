//! Depth calculators for driving off-diagonal kernel entries below a
//! threshold: exact iteration counts, closed-form sandwich bounds, the
//! chain refinement, and the regime-level bounds for spherical datasets.

use crate::duality::Pgf;
use crate::kernel::KernelMatrix;
use crate::sphere::SphereDataset;
use crate::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;

/// Default iteration ceiling for exact path depths.
pub const DEFAULT_MAX_DEPTH: usize = 100_000;

/// Dense eigensolve size limit for memorization checks.
pub const DENSE_EIG_LIMIT: usize = 4096;

/// Correlation regime of a spherical dataset, set by `log n / d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    SmallCorrelation,
    LargeCorrelation,
    None,
}

/// Depth answer with the closed-form bounds itemized.
#[derive(Debug, Clone, Serialize)]
pub struct DepthReport {
    /// Exact iteration count, absent only when iteration failed to descend.
    pub exact: Option<usize>,
    pub lower: f64,
    pub upper: f64,
    pub regime: Regime,
    pub rho: f64,
    pub target: f64,
    pub n: Option<usize>,
    pub d: Option<usize>,
    /// Each closed-form term by name.
    pub components: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// Smallest `L` with `G^{(L)}(beta) <= alpha`.
pub fn path_depth_exact(g: &Pgf, beta: f64, alpha: f64, max_depth: usize) -> Result<usize> {
    if !(0.0 < alpha && alpha <= beta && beta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < alpha <= beta < 1, got alpha = {alpha}, beta = {beta}"
        )));
    }
    let mut s = beta;
    for depth in 0..=max_depth {
        if s <= alpha {
            return Ok(depth);
        }
        s = g.eval(s);
    }
    Err(Error::NonConvergence(format!(
        "no descent from {beta} to {alpha} within {max_depth} compositions (stalled at {s})"
    )))
}

/// Closed-form sandwich around the exact path depth, each branch itemized.
#[derive(Debug, Clone, Serialize)]
pub struct PathBounds {
    pub lower: f64,
    pub upper: f64,
    pub components: BTreeMap<String, f64>,
}

/// H_upp branches: `log(beta/alpha) / log(beta/G(beta))` and the mirrored
/// complement branch, `+ 1`; H_low takes the max of the reflections. A
/// branch only counts when its denominator is positive (strict descent).
pub fn path_depth_bounds(g: &Pgf, beta: f64, alpha: f64) -> Result<PathBounds> {
    if !(0.0 < alpha && alpha <= beta && beta < 1.0) {
        return Err(Error::InvalidInput(format!(
            "need 0 < alpha <= beta < 1, got alpha = {alpha}, beta = {beta}"
        )));
    }
    let gb = g.eval(beta);
    let ga = g.eval(alpha);
    let mut components = BTreeMap::new();
    let mut upp = f64::INFINITY;
    let mut low = 0.0f64;
    let d_upp_ratio = (beta / gb).ln();
    if d_upp_ratio > 0.0 {
        let v = (beta / alpha).ln() / d_upp_ratio + 1.0;
        components.insert("upper_via_ratio".into(), v);
        upp = upp.min(v);
    }
    let d_upp_comp = ((1.0 - ga) / (1.0 - alpha)).ln();
    if d_upp_comp > 0.0 {
        let v = ((1.0 - alpha) / (1.0 - beta)).ln() / d_upp_comp + 1.0;
        components.insert("upper_via_complement".into(), v);
        upp = upp.min(v);
    }
    let d_low_ratio = (alpha / ga).ln();
    if d_low_ratio > 0.0 {
        let v = (beta / alpha).ln() / d_low_ratio;
        components.insert("lower_via_ratio".into(), v);
        low = low.max(v);
    }
    let d_low_comp = ((1.0 - gb) / (1.0 - beta)).ln();
    if d_low_comp > 0.0 {
        let v = ((1.0 - alpha) / (1.0 - beta)).ln() / d_low_comp;
        components.insert("lower_via_complement".into(), v);
        low = low.max(v);
    }
    if !upp.is_finite() {
        return Err(Error::InvalidInput(format!(
            "no strict descent at the endpoints (G({beta}) = {gb}, G({alpha}) = {ga}); \
             bounds inapplicable"
        )));
    }
    Ok(PathBounds { lower: low, upper: upp, components })
}

/// Chain refinement of the lower bound: best split point on a grid gives
/// `H_low(alpha, s) + H_low(s, beta) - 1`.
pub fn chain_lower_bound(g: &Pgf, beta: f64, alpha: f64, s_grid: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &s in s_grid {
        if !(alpha < s && s < beta) {
            continue;
        }
        let (Ok(a), Ok(b)) = (path_depth_bounds(g, s, alpha), path_depth_bounds(g, beta, s))
        else {
            continue;
        };
        let v = a.lower + b.lower - 1.0;
        best = Some(best.map_or(v, |cur: f64| cur.max(v)));
    }
    best
}

/// Matching chain refinement of the upper bound.
pub fn chain_upper_bound(g: &Pgf, beta: f64, alpha: f64, s_grid: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &s in s_grid {
        if !(alpha < s && s < beta) {
            continue;
        }
        let (Ok(a), Ok(b)) = (path_depth_bounds(g, s, alpha), path_depth_bounds(g, beta, s))
        else {
            continue;
        };
        let v = a.upper + b.upper;
        best = Some(best.map_or(v, |cur: f64| cur.min(v)));
    }
    best
}

pub fn default_chain_grid(beta: f64, alpha: f64) -> Vec<f64> {
    (1..10).map(|i| alpha + (beta - alpha) * i as f64 / 10.0).collect()
}

/// Where the correlation input comes from: a scalar or a dataset whose
/// maximal absolute correlation is used.
pub enum CorrelationSource<'a> {
    Rho(f64),
    Dataset(&'a SphereDataset),
}

impl CorrelationSource<'_> {
    fn resolve(&self) -> (f64, bool, Option<usize>, Option<usize>) {
        match self {
            CorrelationSource::Rho(rho) => (*rho, false, None, None),
            CorrelationSource::Dataset(ds) => {
                let negatives = ds.correlations().iter().any(|r| *r < 0.0);
                (ds.rho_max(), negatives, Some(ds.n()), Some(ds.d()))
            }
        }
    }
}

/// Minimum depth driving every off-diagonal kernel entry below `epsilon`
/// in magnitude; exact iteration plus the closed-form sandwich.
pub fn epsilon_closeness_depth(
    g: &Pgf,
    source: &CorrelationSource<'_>,
    epsilon: f64,
) -> Result<DepthReport> {
    let (rho, has_negatives, n, d) = source.resolve();
    if !(epsilon > 0.0 && epsilon <= rho) {
        return Err(Error::InvalidInput(format!(
            "epsilon {epsilon} must be in (0, rho], rho = {rho}"
        )));
    }
    let mut warnings = Vec::new();
    if has_negatives {
        let sym = crate::duality::check_pgf_symmetry(g, &crate::duality::default_symmetry_grid());
        if !sym.symmetric {
            warnings.push(format!(
                "dataset has negative correlations and |G(s)| = G(|s|) fails \
                 (violation {:.3e}); the |rho|-based depth is not guaranteed exact",
                sym.max_violation
            ));
        }
    }
    let mut components = BTreeMap::new();
    let exact = match path_depth_exact(g, rho, epsilon, DEFAULT_MAX_DEPTH) {
        Ok(l) => Some(l),
        Err(e) => {
            warnings.push(format!("exact iteration failed: {e}"));
            None
        }
    };
    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    if rho > epsilon {
        match path_depth_bounds(g, rho, epsilon) {
            Ok(b) => {
                lower = b.lower;
                upper = b.upper;
                components.extend(b.components);
            }
            Err(e) => warnings.push(format!("closed-form bounds inapplicable: {e}")),
        }
        let grid = default_chain_grid(rho, epsilon);
        if let Some(v) = chain_lower_bound(g, rho, epsilon, &grid) {
            components.insert("chain_lower".into(), v);
            lower = lower.max(v);
        }
        if let Some(v) = chain_upper_bound(g, rho, epsilon, &grid) {
            components.insert("chain_upper".into(), v);
            upper = upper.min(v);
        }
    } else {
        upper = 0.0;
    }
    Ok(DepthReport {
        exact,
        lower,
        upper,
        regime: Regime::None,
        rho,
        target: epsilon,
        n,
        d,
        components,
        warnings,
    })
}

/// `s_star`: smallest `s` with `(1 - G(s)) / (1 - s) >= (1 + mu) / 2`,
/// found by bisection on the continuous increasing slope map.
pub fn s_star(g: &Pgf) -> Result<f64> {
    let mu = g.mean();
    if mu <= 1.0 {
        return Err(Error::InvalidInput(format!(
            "slope threshold needs a supercritical base, mean = {mu}"
        )));
    }
    let target = (1.0 + mu) / 2.0;
    let slope = |s: f64| (1.0 - g.eval(s)) / (1.0 - s);
    let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-12);
    if slope(hi) < target {
        return Err(Error::NonConvergence(format!(
            "slope map never reaches {target} below 1"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(hi)
}

fn centered_supercritical_guard(g: &Pgf) -> Result<(f64, f64)> {
    let p1 = g.prob(1);
    if g.prob(0) > 1e-12 {
        return Err(Error::InvalidInput(
            "regime bounds require a centered base (p_0 = 0)".into(),
        ));
    }
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::InvalidInput(format!(
            "regime bounds need p_1 in (0, 1), got {p1}"
        )));
    }
    Ok((p1, g.mean()))
}

/// Depth needed for all kernel-matrix eigenvalues to land in
/// `[1 - kappa, 1 + kappa]`: sandwiched by exact path depths to `kappa` and
/// `kappa / n`, with the closed-form regime bounds attached when the
/// dataset scaling puts `log n / d` below the small constant or above the
/// large one.
pub fn memorization_depth_bounds(
    g: &Pgf,
    source: &CorrelationSource<'_>,
    kappa: f64,
    n_override: Option<usize>,
) -> Result<DepthReport> {
    let (rho, _, n_src, d) = source.resolve();
    let n = n_override
        .or(n_src)
        .ok_or_else(|| Error::InvalidInput("dataset size n required".into()))?;
    if !(kappa > 0.0 && kappa < rho) {
        return Err(Error::InvalidInput(format!(
            "kappa {kappa} must be in (0, rho), rho = {rho}"
        )));
    }
    let mut report = epsilon_closeness_depth(g, source, kappa)?;
    report.n = Some(n);
    report.target = kappa;
    // Sandwich by exact depths: closeness at kappa is necessary, at kappa/n
    // sufficient.
    let lower_exact = report.exact;
    let upper_exact = path_depth_exact(g, rho, kappa / n as f64, DEFAULT_MAX_DEPTH)?;
    report.lower = lower_exact.map_or(report.lower, |l| report.lower.max(l as f64));
    report.upper = upper_exact as f64;
    report.exact = None; // only the sandwich is known for memorization
    if let Some(l) = lower_exact {
        report.components.insert("closeness_depth_at_kappa".into(), l as f64);
    }
    report.components.insert("closeness_depth_at_kappa_over_n".into(), upper_exact as f64);
    let Some(d) = d else {
        return Ok(report);
    };
    let (p1, mu) = match centered_supercritical_guard(g) {
        Ok(v) => v,
        Err(e) => {
            report.warnings.push(format!("regime bounds skipped: {e}"));
            return Ok(report);
        }
    };
    let a1 = p1.sqrt();
    let log_ratio = (n as f64).ln() / d as f64;
    let denom = -p1.ln(); // log a_1^{-2}
    let c_small = 0.1f64.min(0.5 * (a1 - p1));
    report.components.insert("small_regime_constant".into(), c_small);
    {
        let log_scale = log_ratio.ln();
        let lo = 0.5 * log_scale / denom + (0.5 / kappa).ln() / denom;
        let hi = log_scale / denom + 2.0 * (3.0 * n as f64 / kappa).ln() / denom + 1.0;
        report.components.insert("small_regime_lower".into(), lo);
        report.components.insert("small_regime_upper".into(), hi);
    }
    if log_ratio.sqrt() < c_small {
        report.regime = Regime::SmallCorrelation;
        return Ok(report);
    }
    match s_star(g) {
        Ok(ss) => {
            let c_large = (1.5 * 40f64.ln()).max(((1.0 - ss) / 0.06).ln());
            report.components.insert("s_star".into(), ss);
            report.components.insert("large_regime_constant".into(), c_large);
            if kappa >= n as f64 * ss {
                report.warnings.push(format!(
                    "kappa {kappa} outside (0, n * s_star = {}); bounds reported anyway",
                    n as f64 * ss
                ));
            }
            let lo = 1.5 * log_ratio / mu.ln() + (0.5 / kappa).ln() / denom - 1.0;
            let g_ss = 1.0 - (1.0 - ss) * (mu + 1.0) / 2.0;
            let hi = 3.0 * ((n as f64).ln() / (d as f64 - 1.0)) / ((mu + 1.0) / 2.0).ln()
                + (ss * n as f64 / kappa).ln() / (ss / g_ss).ln()
                + 2.0;
            report.components.insert("large_regime_lower".into(), lo);
            report.components.insert("large_regime_upper".into(), hi);
            if log_ratio > c_large {
                report.regime = Regime::LargeCorrelation;
            }
        }
        Err(e) => report.warnings.push(format!("slope threshold unavailable: {e}")),
    }
    Ok(report)
}

/// Eigenvalue-band check of a kernel matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MemorizationCheck {
    pub holds: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Largest observed deviation of an eigenvalue from 1.
    pub kappa_observed: f64,
    /// `(1 + kappa') / (1 - kappa')` when meaningful.
    pub condition_surrogate: Option<f64>,
}

pub fn check_kappa_memorization(k: &KernelMatrix, kappa: f64) -> Result<MemorizationCheck> {
    if k.n() > DENSE_EIG_LIMIT {
        return Err(Error::InvalidInput(format!(
            "matrix size {} exceeds dense eigensolve limit {DENSE_EIG_LIMIT}",
            k.n()
        )));
    }
    let eig = k.eigenvalues();
    let min = *eig.first().unwrap();
    let max = *eig.last().unwrap();
    let dev = (1.0 - min).abs().max((max - 1.0).abs());
    Ok(MemorizationCheck {
        holds: dev <= kappa,
        min_eigenvalue: min,
        max_eigenvalue: max,
        kappa_observed: dev,
        condition_surrogate: (dev < 1.0).then(|| (1.0 + dev) / (1.0 - dev)),
    })
}
