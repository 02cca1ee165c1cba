//! Galton-Watson simulation of generation sizes, exact composed generation
//! distributions, and Monte-Carlo diagnostics for the `Z_L / mu^L` limit.

use crate::duality::Pgf;
use crate::rng;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Default per-trajectory population cap.
pub const DEFAULT_POPULATION_CAP: u64 = 10_000_000;

/// Walker alias table for O(1) offspring draws.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Build from a PGF. A tiny tail (< 1e-9) folds into the top coefficient;
    /// bigger tails are rejected because the draws would be visibly biased.
    pub fn from_pgf(g: &Pgf) -> Result<Self> {
        if g.tail_mass >= 1e-9 {
            return Err(Error::InvalidInput(format!(
                "tail mass {} too large for exact offspring sampling",
                g.tail_mass
            )));
        }
        let mut weights = g.coefficients.clone();
        let total: f64 = weights.iter().sum::<f64>() + g.tail_mass;
        if total <= 0.0 || total.is_nan() {
            return Err(Error::InvalidInput("offspring distribution has no mass".into()));
        }
        *weights.last_mut().unwrap() += g.tail_mass;
        let n = weights.len();
        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias = vec![0usize; n];
        let mut small: Vec<usize> = (0..n).filter(|&i| prob[i] < 1.0).collect();
        let mut large: Vec<usize> = (0..n).filter(|&i| prob[i] >= 1.0).collect();
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            alias[s] = l;
            prob[l] = (prob[l] + prob[s]) - 1.0;
            if prob[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        for i in small.into_iter().chain(large) {
            prob[i] = 1.0;
        }
        Ok(Self { prob, alias })
    }

    pub fn sample(&self, r: &mut ChaCha8Rng) -> usize {
        let n = self.prob.len();
        let i = r.gen_range(0..n);
        if r.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// One simulated trajectory of generation sizes `Z_0 .. Z_L`.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct GwTrajectory {
    pub sizes: Vec<u64>,
    pub extinct: bool,
    /// The population hit the cap; later generations were not simulated and
    /// the trajectory must be excluded from limit statistics.
    pub truncated: bool,
}

/// Simulate `trials` independent trajectories to depth `L`, one RNG
/// sub-stream per trial so results do not depend on scheduling.
pub fn simulate_generation_sizes(
    g: &Pgf,
    depth: usize,
    trials: usize,
    seed: u64,
    cap: u64,
) -> Result<Vec<GwTrajectory>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trial count must be >= 1".into()));
    }
    let table = AliasTable::from_pgf(g)?;
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut r = rng::substream2(seed, 1, t as u64);
        let mut sizes = Vec::with_capacity(depth + 1);
        let mut z = 1u64;
        sizes.push(z);
        let mut truncated = false;
        for _ in 0..depth {
            if z == 0 {
                sizes.push(0);
                continue;
            }
            if z > cap {
                truncated = true;
                break;
            }
            let mut next = 0u64;
            for _ in 0..z {
                next += table.sample(&mut r) as u64;
            }
            z = next;
            sizes.push(z);
        }
        let extinct = *sizes.last().unwrap() == 0 && !truncated;
        out.push(GwTrajectory { sizes, extinct, truncated });
    }
    Ok(out)
}

/// Exact distribution of `Z_L`: coefficients of the L-fold composition
/// `G o ... o G` up to degree `degree_cap`, overflow mass in `tail_mass`.
pub fn exact_generation_distribution(g: &Pgf, depth: usize, degree_cap: usize) -> Result<Pgf> {
    if degree_cap < 1 {
        return Err(Error::InvalidInput("degree cap must be >= 1".into()));
    }
    let mut cur = vec![0.0, 1.0]; // Z_0 = 1
    for _ in 0..depth {
        cur = compose_into(g, &cur, degree_cap);
    }
    let sum: f64 = cur.iter().sum();
    let mut out = Pgf::from_coefficients(cur.iter().map(|p| p.max(0.0)).collect())?;
    out.tail_mass = (1.0 - sum).max(0.0);
    out.family = g.family.as_ref().map(|f| format!("composed:{f}"));
    out.params = g.params.clone();
    out.params.insert("depth".into(), depth as f64);
    Ok(out)
}

/// Coefficients of `G(inner(s))` truncated at `degree_cap`, by Horner over
/// the outer coefficients with truncated polynomial multiplication. The
/// outer tail is dropped (it surfaces as missing mass).
fn compose_into(g: &Pgf, inner: &[f64], degree_cap: usize) -> Vec<f64> {
    let mut acc = vec![0.0f64; 1];
    for &p in g.coefficients.iter().rev() {
        acc = poly_mul_trunc(&acc, inner, degree_cap);
        acc[0] += p;
    }
    acc
}

fn poly_mul_trunc(a: &[f64], b: &[f64], degree_cap: usize) -> Vec<f64> {
    let n = (a.len() + b.len() - 1).min(degree_cap + 1);
    let mut out = vec![0.0f64; n];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 || i > degree_cap {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(degree_cap + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// A point estimate of the Laplace transform `E[e^{-t W}]` on the surviving
/// trajectories, with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct LaplacePoint {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte-Carlo diagnostics for the martingale limit of `Z_L / mu^L`.
///
/// The mean and variance are over all non-truncated trajectories, extinct
/// ones contributing 0; in that form the limit has mean exactly 1 and
/// variance `Var[Y] / (mu (mu - 1))`. `samples` keeps the surviving
/// (positive) values, which feed the conditional Laplace transform.
#[derive(Debug, Clone, Serialize)]
pub struct WEstimate {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
    pub laplace: Vec<LaplacePoint>,
    pub extinct: usize,
    pub truncated: usize,
    pub trials: usize,
}

pub fn kesten_stigum_estimate(
    g: &Pgf,
    depth: usize,
    trials: usize,
    seed: u64,
    t_grid: &[f64],
) -> Result<WEstimate> {
    let mu = g.mean();
    if mu <= 1.0 {
        return Err(Error::InvalidInput(format!(
            "offspring mean {mu} <= 1: no nondegenerate rescaled limit"
        )));
    }
    let trajectories = simulate_generation_sizes(g, depth, trials, seed, DEFAULT_POPULATION_CAP)?;
    let scale = mu.powi(depth as i32);
    let mut samples = Vec::new();
    let mut extinct = 0usize;
    let mut truncated = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut kept = 0usize;
    for tr in &trajectories {
        if tr.truncated {
            truncated += 1;
            continue;
        }
        kept += 1;
        let w = *tr.sizes.last().unwrap() as f64 / scale;
        sum += w;
        sum_sq += w * w;
        if w > 0.0 {
            samples.push(w);
        } else {
            extinct += 1;
        }
    }
    if kept < 2 {
        return Err(Error::NonConvergence(format!(
            "only {kept} of {trials} trajectories stayed below the population cap"
        )));
    }
    let n = kept as f64;
    let mean = sum / n;
    let variance = (sum_sq - n * mean * mean) / (n - 1.0);
    let mean_stderr = (variance / n).sqrt();
    // Standard error of the sample variance via the fourth central moment.
    let m4: f64 = trajectories
        .iter()
        .filter(|tr| !tr.truncated)
        .map(|tr| (*tr.sizes.last().unwrap() as f64 / scale - mean).powi(4))
        .sum::<f64>()
        / n;
    let variance_stderr = ((m4 - variance * variance).max(0.0) / n).sqrt();
    let mut laplace = Vec::with_capacity(t_grid.len());
    let m = samples.len().max(1) as f64;
    for &t in t_grid {
        let vals: Vec<f64> = samples.iter().map(|w| (-t * w).exp()).collect();
        let est = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - est) * (v - est)).sum::<f64>() / m;
        laplace.push(LaplacePoint { t, estimate: est, stderr: (var / m).sqrt() });
    }
    Ok(WEstimate {
        samples,
        mean,
        mean_stderr,
        variance,
        variance_stderr,
        laplace,
        extinct,
        truncated,
        trials,
    })
}
