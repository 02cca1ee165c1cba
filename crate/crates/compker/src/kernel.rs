//! Depth-composed kernels: pointwise evaluation, the branching-process
//! Monte-Carlo oracle, limit curves, and empirical kernel matrices.

use crate::branching;
use crate::duality::{self, Pgf};
use crate::sphere::SphereDataset;
use crate::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use std::io::Write;
use std::sync::OnceLock;

/// A depth-`L` composition of the PGF dual to an activation.
#[derive(Debug, Clone)]
pub struct CompositionalKernel {
    pub base: Pgf,
    pub depth: usize,
}

impl CompositionalKernel {
    pub fn new(base: Pgf, depth: usize) -> Self {
        Self { base, depth }
    }

    /// `K^{(L)}(e^{-t / mu^L})` evaluated in the complement variable
    /// `u = 1 - s`. Direct composition at `s = e^{-t/mu^L}` rounds `s` to
    /// an absolute 1e-16, which the `L` compositions amplify by `mu^L`;
    /// carrying `u` through `ln_1p`/`exp_m1` keeps full relative precision
    /// at any depth.
    pub fn eval_rescaled(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "rescaled curves need t >= 0");
        let mu = self.base.mean();
        let mut u = -(-t / mu.powi(self.depth as i32)).exp_m1();
        for _ in 0..self.depth {
            u = self.base.complement_eval(u);
        }
        1.0 - u
    }

    /// `L` Horner passes of the base PGF, exact to machine precision.
    pub fn eval(&self, rho: f64) -> f64 {
        assert!(rho.abs() <= 1.0 + 1e-9, "correlation {rho} outside [-1,1]");
        // Clamp only: dot products of unit vectors can overshoot by
        // rounding, but interior values must pass through untouched (deep
        // rescaled curves feed in correlations within 1e-13 of 1).
        let mut s = rho.clamp(-1.0, 1.0);
        for _ in 0..self.depth {
            s = self.base.eval(s);
        }
        s
    }

    /// Monte-Carlo oracle: average of `rho^{Z_L}` over simulated
    /// trajectories, with the standard error of that average.
    pub fn eval_via_branching(
        &self,
        rho: f64,
        trials: usize,
        seed: u64,
    ) -> Result<(f64, f64)> {
        let rho = rho.clamp(-1.0, 1.0);
        let trajectories = branching::simulate_generation_sizes(
            &self.base,
            self.depth,
            trials,
            seed,
            branching::DEFAULT_POPULATION_CAP,
        )?;
        let vals: Vec<f64> = trajectories
            .iter()
            .map(|t| {
                let z = *t.sizes.last().unwrap();
                if z == 0 {
                    1.0 // rho^0
                } else {
                    rho.powi(z.min(i32::MAX as u64) as i32)
                }
            })
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok((mean, (var / n).sqrt()))
    }
}

/// Which sufficient condition (if any) extends the deep-kernel limit to
/// negative correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeSideCondition {
    SymmetricPgf,
    Centered,
    None,
}

/// One row of a limit-curve table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvePoint {
    pub depth: usize,
    pub x: f64,
    pub value: f64,
    pub prediction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveTable {
    /// "rho" for the unscaled curve, "t" for the rescaled one.
    pub x_label: &'static str,
    pub points: Vec<CurvePoint>,
    pub negative_side: NegativeSideCondition,
}

impl CurveTable {
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "L,{},value,prediction", self.x_label)?;
        for p in &self.points {
            writeln!(w, "{},{:?},{:?},{:?}", p.depth, p.x, p.value, p.prediction)?;
        }
        Ok(())
    }
}

fn negative_side_condition(base: &Pgf) -> NegativeSideCondition {
    if duality::check_pgf_symmetry(base, &duality::default_symmetry_grid()).symmetric {
        NegativeSideCondition::SymmetricPgf
    } else if base.prob(0) <= 1e-12 {
        NegativeSideCondition::Centered
    } else {
        NegativeSideCondition::None
    }
}

/// `K^{(L)}(rho)` over a depth list and correlation grid, with the deep
/// limit as prediction: 1 when `mu <= 1`, else the extinction probability
/// away from `rho = 1`.
pub fn unscaled_limit_curve(base: &Pgf, depths: &[usize], rho_grid: &[f64]) -> Result<CurveTable> {
    let mu = base.mean();
    let xi = duality::extinction_probability(base)?;
    let mut points = Vec::with_capacity(depths.len() * rho_grid.len());
    for &depth in depths {
        let k = CompositionalKernel::new(base.clone(), depth);
        for &rho in rho_grid {
            // Fixation at rho = 1; otherwise the extinction probability,
            // which is also 1 in the (sub)critical phase.
            let prediction = if rho == 1.0 || mu <= 1.0 { 1.0 } else { xi };
            points.push(CurvePoint { depth, x: rho, value: k.eval(rho), prediction });
        }
    }
    Ok(CurveTable { x_label: "rho", points, negative_side: negative_side_condition(base) })
}

/// `K^{(L)}(e^{-t / mu^L})` over a depth list and `t` grid. For a
/// supercritical base the prediction column is the branching-side value
/// `xi + (1 - xi) E[e^{-t W}]` estimated at the largest depth; otherwise
/// the limit 1.
pub fn rescaled_limit_curve(
    base: &Pgf,
    depths: &[usize],
    t_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<CurveTable> {
    if t_grid.iter().any(|t| *t < 0.0) {
        return Err(Error::InvalidInput("rescaled grid needs t >= 0".into()));
    }
    let mu = base.mean();
    let predictions: Vec<f64> = if mu > 1.0 {
        let xi = duality::extinction_probability(base)?;
        // Estimate the limit variable at the largest requested depth, capped
        // so the expected population stays far below the simulation cap; the
        // rescaled population converges well before that.
        let depth_cap = (1e5f64.ln() / mu.ln()).floor().max(1.0) as usize;
        let depth = depths.iter().copied().max().unwrap_or(8).min(depth_cap);
        let est = branching::kesten_stigum_estimate(base, depth, trials, seed, t_grid)?;
        est.laplace.iter().map(|p| xi + (1.0 - xi) * p.estimate).collect()
    } else {
        vec![1.0; t_grid.len()]
    };
    let mut points = Vec::with_capacity(depths.len() * t_grid.len());
    for &depth in depths {
        let k = CompositionalKernel::new(base.clone(), depth);
        for (&t, &prediction) in t_grid.iter().zip(&predictions) {
            points.push(CurvePoint { depth, x: t, value: k.eval_rescaled(t), prediction });
        }
    }
    Ok(CurveTable { x_label: "t", points, negative_side: negative_side_condition(base) })
}

/// Dense symmetric kernel matrix over a dataset's cached correlations.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub entries: DMatrix<f64>,
    pub source: String,
    pub depth: usize,
    eigenvalues: OnceLock<Vec<f64>>,
}

impl KernelMatrix {
    pub fn new(entries: DMatrix<f64>, source: impl Into<String>, depth: usize) -> Self {
        assert_eq!(entries.nrows(), entries.ncols());
        Self { entries, source: source.into(), depth, eigenvalues: OnceLock::new() }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Eigenvalues in ascending order, computed once and cached.
    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.get_or_init(|| {
            let eig = SymmetricEigen::new(self.entries.clone());
            let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            vals.sort_by(f64::total_cmp);
            vals
        })
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for i in 0..self.n() {
            let row: Vec<String> =
                self.entries.row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Row-major little-endian float64 with an 8-byte `n` header.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        for i in 0..self.n() {
            for v in self.entries.row(i).iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Entry-wise kernel evaluation on the dataset's cached correlations, with
/// the diagonal forced to `K(1)`.
pub fn build_kernel_matrix(
    base: &Pgf,
    dataset: &SphereDataset,
    depth: usize,
) -> Result<KernelMatrix> {
    let k = CompositionalKernel::new(base.clone(), depth);
    let n = dataset.n();
    let diag = k.eval(1.0);
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        entries[(i, i)] = diag;
        for j in i + 1..n {
            let v = k.eval(dataset.rho(i, j));
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    Ok(KernelMatrix::new(entries, format!("dataset(n={n}, d={})", dataset.d()), depth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn depth_zero_is_identity_map() {
        let k = CompositionalKernel::new(Pgf::poisson(2.0).unwrap(), 0);
        assert_eq!(k.eval(0.37), 0.37);
    }

    #[test]
    fn identity_base_fixed_at_any_depth() {
        let k = CompositionalKernel::new(Pgf::point_mass(1), 30);
        assert_abs_diff_eq!(k.eval(0.9), 0.9);
        assert_abs_diff_eq!(k.eval(-0.4), -0.4);
    }

    #[test]
    fn binary_fission_power_law() {
        let k = CompositionalKernel::new(Pgf::point_mass(2), 3);
        assert_abs_diff_eq!(k.eval(0.9), 0.43046721, epsilon = 1e-12);
    }

    #[test]
    fn endpoint_one_maps_to_one() {
        let k = CompositionalKernel::new(Pgf::poisson(1.3).unwrap(), 7);
        assert_abs_diff_eq!(k.eval(1.0 + 5e-13), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn branching_oracle_agrees() {
        let base = Pgf::poisson(1.0).unwrap();
        let k = CompositionalKernel::new(base, 2);
        let exact = k.eval(0.5);
        let (mc, se) = k.eval_via_branching(0.5, 200_000, 5).unwrap();
        assert!((mc - exact).abs() < 4.0 * se, "mc {mc} exact {exact} se {se}");
    }

    #[test]
    fn branching_oracle_exact_at_one() {
        let k = CompositionalKernel::new(Pgf::poisson(1.5).unwrap(), 3);
        let (mc, _) = k.eval_via_branching(1.0, 500, 1).unwrap();
        assert_eq!(mc, 1.0);
    }

    #[test]
    fn random_bases_oracle_equivalence() {
        let mut r = crate::rng::substream(404, 0);
        for case in 0..20 {
            let raw: Vec<f64> = (0..4).map(|_| r.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let base =
                Pgf::from_coefficients(raw.iter().map(|v| v / total).collect()).unwrap();
            let depth = r.gen_range(0..=4);
            let rho = r.gen_range(-0.9..0.9);
            let k = CompositionalKernel::new(base, depth);
            let (mc, se) = k.eval_via_branching(rho, 50_000, 1000 + case).unwrap();
            let exact = k.eval(rho);
            assert!(
                (mc - exact).abs() < 4.0 * se.max(1e-9),
                "case {case}: mc {mc} exact {exact} se {se}"
            );
        }
    }

    #[test]
    fn centered_base_contracts_geometrically() {
        // With no constant term, |G(s)| <= G(|s|) and s -> G(s)/s is
        // increasing, so each composition shrinks by at least G(|rho|)/|rho|.
        let base = Pgf::from_coefficients(vec![0.0, 0.4, 0.1, 0.5]).unwrap();
        for depth in [1, 3, 8] {
            let k = CompositionalKernel::new(base.clone(), depth);
            for rho in [-0.8f64, -0.3, 0.2, 0.7] {
                let rate = base.eval(rho.abs()) / rho.abs();
                assert!(rate < 1.0);
                assert!(k.eval(rho).abs() <= rho.abs() * rate.powi(depth as i32) + 1e-12);
            }
        }
    }

    #[test]
    fn supercritical_monotone_in_depth_above_xi() {
        let base = Pgf::from_coefficients(vec![0.0, 0.3, 0.7]).unwrap();
        let xi = duality::extinction_probability(&base).unwrap();
        for rho in [0.5, 0.8, 0.95] {
            assert!(rho > xi);
            let mut prev = rho;
            for depth in 1..=10 {
                let cur = CompositionalKernel::new(base.clone(), depth).eval(rho);
                assert!(cur <= prev + 1e-12);
                prev = cur;
            }
        }
    }

    #[test]
    fn unscaled_curve_limits() {
        let grid = [-0.5, 0.0, 0.5, 1.0];
        // Subcritical base drifts to 1 everywhere.
        let sub = Pgf::from_coefficients(vec![0.6, 0.2, 0.2]).unwrap();
        let table = unscaled_limit_curve(&sub, &[30], &grid).unwrap();
        for p in &table.points {
            assert_eq!(p.prediction, 1.0);
            assert!((p.value - 1.0).abs() < 1e-3, "value {} at rho {}", p.value, p.x);
        }
        // Centered supercritical base collapses to the indicator of rho = 1.
        let cen = Pgf::from_coefficients(vec![0.0, 0.5, 0.5]).unwrap();
        let table = unscaled_limit_curve(&cen, &[40], &grid).unwrap();
        for p in &table.points {
            if p.x == 1.0 {
                assert_eq!(p.value, 1.0);
            } else {
                assert!(p.value.abs() < 1e-3);
                assert_eq!(p.prediction, 0.0);
            }
        }
        assert_eq!(table.negative_side, NegativeSideCondition::Centered);
    }

    #[test]
    fn rescaled_binary_fission_is_exponential() {
        let base = Pgf::point_mass(2);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 2.0).collect();
        // Exact invariance; complement-space evaluation keeps it to a few
        // ulps even at depth 40, where s-space composition would lose 1e-4.
        let table = rescaled_limit_curve(&base, &[1, 5, 20, 40], &grid, 500, 3).unwrap();
        for p in &table.points {
            assert_abs_diff_eq!(p.value, (-p.x).exp(), epsilon = 1e-12);
            assert_abs_diff_eq!(p.prediction, (-p.x).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn rescaled_subcritical_tends_to_one() {
        let base = Pgf::from_coefficients(vec![0.5, 0.5]).unwrap();
        let table = rescaled_limit_curve(&base, &[25], &[0.0, 1.0, 3.0], 10, 1).unwrap();
        for p in &table.points {
            assert_eq!(p.prediction, 1.0);
            assert!(p.value > 0.99, "value {} at t {}", p.value, p.x);
        }
    }

    #[test]
    fn matrix_orthonormal_gives_identity() {
        let m = nalgebra::DMatrix::<f64>::identity(3, 4);
        let ds = sphere::SphereDataset::from_points(m).unwrap();
        let base = Pgf::from_coefficients(vec![0.0, 0.5, 0.5]).unwrap();
        let km = build_kernel_matrix(&base, &ds, 2).unwrap();
        assert_abs_diff_eq!(km.entries, nalgebra::DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn matrix_hand_value_and_psd() {
        let ds = sphere::SphereDataset::from_points(nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[1.0, 0.0, 0.8, 0.6],
        ))
        .unwrap();
        let km = build_kernel_matrix(&Pgf::point_mass(2), &ds, 2).unwrap();
        assert_abs_diff_eq!(km.entries[(0, 1)], 0.8f64.powi(4), epsilon = 1e-12);
        assert!(km.eigenvalues()[0] >= -1e-8 * 2.0);
    }

    #[test]
    fn duplicated_point_makes_matrix_singular() {
        let ds = sphere::SphereDataset::from_points(nalgebra::DMatrix::from_row_slice(
            2,
            3,
            &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        ))
        .unwrap();
        let km = build_kernel_matrix(&Pgf::poisson(1.0).unwrap(), &ds, 3).unwrap();
        assert_eq!(km.entries[(0, 1)], 1.0);
        assert!(km.eigenvalues()[0].abs() < 1e-12);
    }

    #[test]
    fn random_kernel_matrices_are_psd() {
        let ds = sphere::sample_uniform_sphere(25, 10, 8).unwrap();
        for (i, base) in [
            Pgf::poisson(1.4).unwrap(),
            Pgf::from_coefficients(vec![0.0, 0.7, 0.3]).unwrap(),
            Pgf::geometric(0.5).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let km = build_kernel_matrix(base, &ds, (i % 3) + 1).unwrap();
            assert!(
                km.eigenvalues()[0] >= -1e-8 * 25.0,
                "min eigenvalue {}",
                km.eigenvalues()[0]
            );
        }
    }

    #[test]
    fn curve_csv_format() {
        let base = Pgf::point_mass(2);
        let table = unscaled_limit_curve(&base, &[1], &[0.5]).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("L,rho,value,prediction\n"));
        assert!(text.contains("1,0.5,0.25,"));
    }
}
