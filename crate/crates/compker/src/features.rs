//! Random-feature constructions whose Gram matrices converge to a target
//! kernel: sphere-direction Legendre features, Gaussian-direction Hermite
//! features of a compressed activation, and the identity-plus-remainder
//! decomposition induced by degree truncation.

use crate::branching;
use crate::duality::Pgf;
use crate::hermite::ActivationSpec;
use crate::rng;
use crate::spectral::{self, LegendreExpansion};
use crate::sphere::SphereDataset;
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use std::io::Write;

/// How a feature matrix was generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    LegendreSphere,
    HermiteGaussian,
    HermiteTruncatedNoised,
}

/// An `n x m` random-feature matrix; `(1/m) Phi Phi^T` estimates the kernel.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub entries: DMatrix<f64>,
    pub generator: Generator,
    pub seed: u64,
    pub truncation: usize,
}

impl FeatureMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m(&self) -> usize {
        self.entries.ncols()
    }

    /// `(1/m) Phi Phi^T`.
    pub fn gram(&self) -> DMatrix<f64> {
        (&self.entries * self.entries.transpose()) / self.m() as f64
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for i in 0..self.n() {
            let row: Vec<String> =
                self.entries.row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Row-major little-endian float64 with a 16-byte `(n, m)` header.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.m() as u64).to_le_bytes())?;
        for i in 0..self.n() {
            for v in self.entries.row(i).iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Feature columns `sigma_f(<x_i, theta_j / ||theta_j||>)` over Gaussian
/// directions normalized to the sphere; the dual activation integrates
/// against the uniform sphere measure, so normalization is required here.
pub fn legendre_features(
    dataset: &SphereDataset,
    expansion: &LegendreExpansion,
    m: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    if m == 0 {
        return Err(Error::InvalidInput("feature count must be >= 1".into()));
    }
    let act = spectral::activation_from_kernel(expansion)?;
    let n = dataset.n();
    let d = dataset.d();
    let mut entries = DMatrix::zeros(n, m);
    let mut dir = vec![0.0f64; d];
    for j in 0..m {
        let mut r = rng::substream2(seed, 5, j as u64);
        rng::fill_normal(&mut r, &mut dir);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..n {
            let t: f64 = dataset
                .points()
                .row(i)
                .iter()
                .zip(&dir)
                .map(|(x, v)| x * v / norm)
                .sum();
            entries[(i, j)] = act.eval(t.clamp(-1.0, 1.0));
        }
    }
    Ok(FeatureMatrix {
        entries,
        generator: Generator::LegendreSphere,
        seed,
        truncation: expansion.coefficients.len() - 1,
    })
}

/// Single activation replacing a depth-`L` composition: Hermite
/// coefficients `sqrt(P(Z_L = k))` up to `trunc`, with the dropped mass
/// recorded in `truncated_tail`.
pub fn compressed_activation(
    base: &Pgf,
    depth: usize,
    trunc: usize,
    degree_cap: usize,
) -> Result<ActivationSpec> {
    let z = branching::exact_generation_distribution(base, depth, degree_cap.max(trunc))?;
    let kept = trunc.min(z.coefficients.len() - 1);
    let coefficients: Vec<f64> = z.coefficients[..=kept].iter().map(|p| p.sqrt()).collect();
    let dropped: f64 = z.coefficients[kept + 1..].iter().sum::<f64>() + z.tail_mass;
    let mut spec = ActivationSpec::new(format!("compressed(depth={depth})"), coefficients);
    spec.truncation = trunc;
    spec.centered = spec.coefficients[0] == 0.0;
    spec.normalized = dropped <= crate::NORM_TOL_EXACT;
    spec.truncated_tail = Some(dropped);
    Ok(spec)
}

/// Feature columns `sigma(<x_i, theta_j>)` over raw Gaussian directions
/// (no normalization: the duality here is the Gaussian product identity).
/// `noise` adds `sqrt(noise)` times i.i.d. standard normals per entry,
/// re-injecting truncated mass onto the Gram diagonal.
pub fn hermite_features(
    dataset: &SphereDataset,
    spec: &ActivationSpec,
    m: usize,
    seed: u64,
    noise: Option<f64>,
) -> Result<FeatureMatrix> {
    if m == 0 {
        return Err(Error::InvalidInput("feature count must be >= 1".into()));
    }
    if let Some(v) = noise {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::InvalidInput(format!("noise mass {v} must be >= 0")));
        }
    }
    let n = dataset.n();
    let d = dataset.d();
    let mut entries = DMatrix::zeros(n, m);
    let mut dir = vec![0.0f64; d];
    let noise_scale = noise.unwrap_or(0.0).sqrt();
    for j in 0..m {
        let mut r = rng::substream2(seed, 6, j as u64);
        rng::fill_normal(&mut r, &mut dir);
        for i in 0..n {
            let t: f64 = dataset
                .points()
                .row(i)
                .iter()
                .zip(&dir)
                .map(|(x, v)| x * v)
                .sum();
            let mut v = spec.eval(t);
            if noise_scale > 0.0 {
                v += noise_scale * rng::normal(&mut r);
            }
            entries[(i, j)] = v;
        }
    }
    Ok(FeatureMatrix {
        entries,
        generator: if noise.is_some() {
            Generator::HermiteTruncatedNoised
        } else {
            Generator::HermiteGaussian
        },
        seed,
        truncation: spec.truncation,
    })
}

/// `K = mass * I + truncated_gram + remainder`, where `truncated_gram` has
/// entries `sum_{k <= trunc} alpha_k rho^k` and `mass` is everything above
/// the truncation level.
#[derive(Debug, Clone)]
pub struct TruncationDecomposition {
    pub regularization_mass: f64,
    pub truncated_gram: DMatrix<f64>,
    pub remainder: DMatrix<f64>,
    pub remainder_op_norm: f64,
    /// `n * rho_max^{trunc + 1}`, the analytic ceiling on the norm above.
    pub op_norm_bound: f64,
}

/// Decompose the kernel matrix of a generation distribution at truncation
/// level `trunc`. All three parts are evaluated from the same coefficient
/// series, so the identity holds to machine precision; off-diagonal
/// remainder entries are exactly the above-truncation series.
pub fn truncation_decomposition(
    dataset: &SphereDataset,
    gen_dist: &Pgf,
    trunc: usize,
) -> Result<TruncationDecomposition> {
    let n = dataset.n();
    let coeffs = &gen_dist.coefficients;
    let kept = trunc.min(coeffs.len() - 1);
    let low_mass: f64 = coeffs[..=kept].iter().sum();
    let mass = coeffs[kept + 1..].iter().sum::<f64>() + gen_dist.tail_mass;
    let mut gram = DMatrix::zeros(n, n);
    let mut remainder = DMatrix::zeros(n, n);
    for i in 0..n {
        gram[(i, i)] = low_mass;
        for j in i + 1..n {
            let rho = dataset.rho(i, j);
            let mut low = 0.0;
            for &c in coeffs[..=kept].iter().rev() {
                low = low * rho + c;
            }
            let mut high = 0.0;
            for &c in coeffs[kept + 1..].iter().rev() {
                high = high * rho + c;
            }
            high *= rho.powi(kept as i32 + 1);
            gram[(i, j)] = low;
            gram[(j, i)] = low;
            remainder[(i, j)] = high;
            remainder[(j, i)] = high;
        }
    }
    let op_norm = if n <= crate::memorization::DENSE_EIG_LIMIT {
        SymmetricEigen::new(remainder.clone())
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, l| acc.max(l.abs()))
    } else {
        power_iteration_norm(&remainder)
    };
    Ok(TruncationDecomposition {
        regularization_mass: mass,
        truncated_gram: gram,
        remainder,
        remainder_op_norm: op_norm,
        op_norm_bound: n as f64 * dataset.rho_max().powi(kept as i32 + 1),
    })
}

fn power_iteration_norm(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = nalgebra::DVector::from_element(n, (n as f64).sqrt().recip());
    let mut norm = 0.0;
    for _ in 0..200 {
        let next = m * &v;
        let next_norm = next.norm();
        if next_norm == 0.0 {
            return 0.0;
        }
        v = next / next_norm;
        if (next_norm - norm).abs() <= 1e-12 * next_norm.max(1.0) {
            return next_norm;
        }
        norm = next_norm;
    }
    norm
}

/// One row of the condition-number sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConditionPoint {
    pub depth: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    /// `lambda_max / lambda_min`; infinite when the Gram is singular.
    pub condition: f64,
}

/// Extreme-eigenvalue ratio of the noised truncated-feature Gram
/// `Phi Phi^T / m` across depths.
pub fn condition_number_vs_depth(
    dataset: &SphereDataset,
    base: &Pgf,
    depths: &[usize],
    trunc: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<ConditionPoint>> {
    if m < dataset.n() {
        return Err(Error::InvalidInput(format!(
            "need m >= n for a meaningful spectrum, got m = {m}, n = {}",
            dataset.n()
        )));
    }
    let mut out = Vec::with_capacity(depths.len());
    for &depth in depths {
        let spec = compressed_activation(base, depth, trunc, crate::DEFAULT_DEGREE_CAP)?;
        let noise = spec.truncated_tail.unwrap_or(0.0);
        let phi = hermite_features(dataset, &spec, m, seed ^ (depth as u64) << 32, Some(noise))?;
        let eig = SymmetricEigen::new(phi.gram());
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for l in eig.eigenvalues.iter() {
            lo = lo.min(*l);
            hi = hi.max(*l);
        }
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        out.push(ConditionPoint { depth, lambda_max: hi, lambda_min: lo, condition });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::CompositionalKernel;
    use crate::sphere;
    use approx::assert_abs_diff_eq;

    fn entrywise_check(gram: &DMatrix<f64>, target: impl Fn(usize, usize) -> f64, tol: f64) {
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let t = target(i, j);
                assert!(
                    (gram[(i, j)] - t).abs() < tol,
                    "entry ({i},{j}): {} vs {t}",
                    gram[(i, j)]
                );
            }
        }
    }

    #[test]
    fn compressed_depth_zero_is_identity() {
        let base = Pgf::poisson(1.3).unwrap();
        let spec = compressed_activation(&base, 0, 20, 64).unwrap();
        assert_abs_diff_eq!(spec.coefficients[1], 1.0);
        assert!(spec.centered && spec.normalized);
        assert_abs_diff_eq!(spec.truncated_tail.unwrap(), 0.0);
    }

    #[test]
    fn compressed_binary_fission_two_layers() {
        let spec = compressed_activation(&Pgf::point_mass(2), 2, 20, 64).unwrap();
        assert_abs_diff_eq!(spec.coefficients[4], 1.0);
        assert_abs_diff_eq!(spec.sum_sq(), 1.0);
    }

    #[test]
    fn compressed_one_layer_recovers_magnitudes() {
        let base = Pgf::from_coefficients(vec![0.1, 0.5, 0.4]).unwrap();
        let spec = compressed_activation(&base, 1, 20, 64).unwrap();
        for k in 0..=2 {
            assert_abs_diff_eq!(spec.coefficients[k], base.prob(k).sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn compressed_truncation_records_dropped_mass() {
        let spec = compressed_activation(&Pgf::point_mass(2), 3, 4, 64).unwrap();
        // Z_3 = 8 > 4: everything is dropped.
        assert_abs_diff_eq!(spec.truncated_tail.unwrap(), 1.0);
        assert!(!spec.normalized);
    }

    #[test]
    fn identity_hermite_gram_estimates_inner_products() {
        let ds = sphere::sample_uniform_sphere(6, 8, 3).unwrap();
        let phi = hermite_features(&ds, &ActivationSpec::identity(), 40_000, 9, None).unwrap();
        let gram = phi.gram();
        // Var of (x^T theta)(z^T theta) is bounded by 3; 5 sigma at m = 4e4.
        entrywise_check(&gram, |i, j| ds.rho(i, j), 5.0 * (3.0f64 / 40_000.0).sqrt());
    }

    #[test]
    fn hermite_gram_matches_composed_kernel() {
        let base = Pgf::from_coefficients(vec![0.0, 0.6, 0.4]).unwrap();
        let depth = 2;
        let ds = sphere::sample_uniform_sphere(8, 12, 4).unwrap();
        let spec = compressed_activation(&base, depth, 20, 128).unwrap();
        let phi = hermite_features(&ds, &spec, 50_000, 11, None).unwrap();
        let k = CompositionalKernel::new(base, depth);
        // Degree-4 products have heavy tails, so the band is the empirical
        // 5-standard-error interval per entry rather than a fixed cutoff.
        let m = phi.m() as f64;
        for i in 0..ds.n() {
            for j in 0..ds.n() {
                let products: Vec<f64> = (0..phi.m())
                    .map(|c| phi.entries[(i, c)] * phi.entries[(j, c)])
                    .collect();
                let mean = products.iter().sum::<f64>() / m;
                let var =
                    products.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1.0);
                let se = (var / m).sqrt();
                let target = k.eval(if i == j { 1.0 } else { ds.rho(i, j) });
                assert!(
                    (mean - target).abs() <= 5.0 * se + 1e-12,
                    "entry ({i},{j}): {mean} vs {target}, se {se}"
                );
            }
        }
    }

    #[test]
    fn noised_variant_restores_unit_diagonal() {
        let base = Pgf::point_mass(2);
        let spec = compressed_activation(&base, 2, 3, 64).unwrap(); // all mass dropped
        let ds = sphere::sample_uniform_sphere(4, 10, 6).unwrap();
        let phi = hermite_features(&ds, &spec, 60_000, 13, spec.truncated_tail).unwrap();
        assert_eq!(phi.generator, Generator::HermiteTruncatedNoised);
        let gram = phi.gram();
        for i in 0..4 {
            assert!((gram[(i, i)] - 1.0).abs() < 0.03, "diag {}", gram[(i, i)]);
        }
    }

    #[test]
    fn negative_noise_rejected() {
        let ds = sphere::sample_uniform_sphere(2, 5, 1).unwrap();
        assert!(
            hermite_features(&ds, &ActivationSpec::identity(), 10, 1, Some(-0.1)).is_err()
        );
    }

    #[test]
    fn legendre_linear_kernel_gram() {
        let ds = sphere::sample_uniform_sphere(5, 6, 15).unwrap();
        let exp = LegendreExpansion { dimension: 6, coefficients: vec![0.0, 1.0] };
        let phi = legendre_features(&ds, &exp, 40_000, 21).unwrap();
        // sigma_f = sqrt(d) t, E[d (x^T u)(z^T u)] = <x, z>.
        entrywise_check(&phi.gram(), |i, j| ds.rho(i, j), 0.05);
    }

    #[test]
    fn legendre_rank_one_for_single_feature() {
        let ds = sphere::sample_uniform_sphere(4, 5, 2).unwrap();
        let exp = LegendreExpansion { dimension: 5, coefficients: vec![0.0, 1.0] };
        let phi = legendre_features(&ds, &exp, 1, 8).unwrap();
        let gram = phi.gram();
        let eig = SymmetricEigen::new(gram);
        let positive = eig.eigenvalues.iter().filter(|l| l.abs() > 1e-12).count();
        assert_eq!(positive, 1);
    }

    #[test]
    fn feature_generation_is_deterministic() {
        let ds = sphere::sample_uniform_sphere(3, 4, 7).unwrap();
        let a = hermite_features(&ds, &ActivationSpec::identity(), 50, 5, None).unwrap();
        let b = hermite_features(&ds, &ActivationSpec::identity(), 50, 5, None).unwrap();
        assert_eq!(a.entries, b.entries);
    }

    #[test]
    fn decomposition_hand_case() {
        // Two points at rho = 0.3, all mass on degree 2, trunc = 1.
        let p = nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.0, 0.3, (1.0f64 - 0.09).sqrt()],
        );
        let ds = sphere::SphereDataset::from_points(p).unwrap();
        let dec = truncation_decomposition(&ds, &Pgf::point_mass(2), 1).unwrap();
        assert_abs_diff_eq!(dec.regularization_mass, 1.0);
        assert_abs_diff_eq!(dec.truncated_gram[(0, 1)], 0.0);
        assert_abs_diff_eq!(dec.remainder[(0, 1)], 0.09, epsilon = 1e-15);
        assert_abs_diff_eq!(dec.remainder[(0, 0)], 0.0);
    }

    #[test]
    fn decomposition_above_cap_has_no_remainder() {
        let ds = sphere::sample_uniform_sphere(6, 10, 30).unwrap();
        let g = Pgf::from_coefficients(vec![0.2, 0.5, 0.3]).unwrap();
        let dec = truncation_decomposition(&ds, &g, 10).unwrap();
        assert_eq!(dec.remainder_op_norm, 0.0);
        assert_abs_diff_eq!(dec.regularization_mass, 0.0);
    }

    #[test]
    fn decomposition_reassembles_and_bounds_norm() {
        let ds = sphere::sample_uniform_sphere(30, 200, 44).unwrap();
        let base = Pgf::from_coefficients(vec![0.0, 0.5, 0.3, 0.2]).unwrap();
        let z = branching::exact_generation_distribution(&base, 2, 128).unwrap();
        let trunc = 3;
        let dec = truncation_decomposition(&ds, &z, trunc).unwrap();
        // Off-diagonal remainder equals the above-truncation series directly.
        for i in 0..30 {
            for j in 0..30 {
                if i == j {
                    assert_eq!(dec.remainder[(i, j)], 0.0);
                    continue;
                }
                let rho = ds.rho(i, j);
                let direct: f64 = z.coefficients[trunc + 1..]
                    .iter()
                    .enumerate()
                    .map(|(off, c)| c * rho.powi((trunc + 1 + off) as i32))
                    .sum();
                assert_abs_diff_eq!(dec.remainder[(i, j)], direct, epsilon = 1e-12);
            }
        }
        assert!(dec.remainder_op_norm <= dec.op_norm_bound + 1e-12);
    }

    #[test]
    fn condition_number_basics() {
        let ds = sphere::sample_uniform_sphere(8, 16, 19).unwrap();
        let base = Pgf::from_coefficients(vec![0.0, 0.7, 0.3]).unwrap();
        let table = condition_number_vs_depth(&ds, &base, &[0, 2], 20, 400, 5).unwrap();
        assert_eq!(table.len(), 2);
        for point in &table {
            assert!(point.condition >= 1.0);
        }
    }

    #[test]
    fn binary_round_trip_header() {
        let ds = sphere::sample_uniform_sphere(3, 4, 1).unwrap();
        let phi = hermite_features(&ds, &ActivationSpec::identity(), 7, 2, None).unwrap();
        let mut buf = Vec::new();
        phi.write_binary(&mut buf).unwrap();
        assert_eq!(u64::from_le_bytes(buf[..8].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 7);
        assert_eq!(buf.len(), 16 + 3 * 7 * 8);
    }
}
