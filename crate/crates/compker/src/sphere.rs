//! Datasets of unit vectors: uniform sphere sampling, greedy polarized
//! packings, cached pairwise correlations, and the concentration band checks
//! on the maximal correlation.

use crate::rng;
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Unit-norm row tolerance for externally supplied datasets.
pub const UNIT_NORM_TOL: f64 = 1e-8;

/// `n` unit vectors in dimension `d` with cached pairwise correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereDataset {
    points: DMatrix<f64>,
    /// Upper triangle (i < j) in row-major order.
    correlations: Vec<f64>,
    rho_max: f64,
}

impl SphereDataset {
    /// Wrap an `n x d` matrix, validating row norms and caching correlations.
    pub fn from_points(points: DMatrix<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 || points.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "dataset must be n >= 1 by d >= 2, got {n} x {}",
                points.ncols()
            )));
        }
        for i in 0..n {
            let norm = points.row(i).norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidInput(format!(
                    "row {i} has norm {norm}, expected 1 within {UNIT_NORM_TOL}"
                )));
            }
        }
        let gram = &points * points.transpose();
        let mut correlations = Vec::with_capacity(n * (n - 1) / 2);
        let mut rho_max = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                let rho = gram[(i, j)].clamp(-1.0, 1.0);
                rho_max = rho_max.max(rho.abs());
                correlations.push(rho);
            }
        }
        Ok(Self { points, correlations, rho_max })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    /// Cached `<x_i, x_j>`; `rho(i, i) = 1`.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.n();
        self.correlations[i * n - i * (i + 1) / 2 + (j - i - 1)]
    }

    pub fn correlations(&self) -> &[f64] {
        &self.correlations
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        for i in 0..self.n() {
            let row: Vec<String> = self.points.row(i).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.n() as u64).to_le_bytes())?;
        w.write_all(&(self.d() as u64).to_le_bytes())?;
        for i in 0..self.n() {
            for v in self.points.row(i).iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in BufReader::new(r).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::InvalidInput(format!("bad CSV number: {e}")))?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::InvalidInput("ragged CSV rows".into()));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("empty dataset file".into()));
        }
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_points(DMatrix::from_row_slice(rows.len(), d, &flat))
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)?;
        let n = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
        if n == 0 || d == 0 || n.saturating_mul(d) > 1 << 30 {
            return Err(Error::InvalidInput(format!("implausible binary header ({n}, {d})")));
        }
        let mut buf = vec![0u8; n * d * 8];
        r.read_exact(&mut buf)?;
        let flat: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_points(DMatrix::from_row_slice(n, d, &flat))
    }

    /// Load from a path, picking the format by extension (`.csv` is text,
    /// anything else is the binary layout).
    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(file)
        } else {
            Self::read_binary(BufReader::new(file))
        }
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(&mut w)
        } else {
            self.write_binary(&mut w)
        }
    }
}

/// One Gaussian row for point `i`, drawn from its own sub-stream.
fn gaussian_row(seed: u64, i: usize, d: usize) -> Vec<f64> {
    let mut r = rng::substream2(seed, 3, i as u64);
    let mut row = vec![0.0; d];
    rng::fill_normal(&mut r, &mut row);
    row
}

/// Uniform sample on the sphere: normalized i.i.d. Gaussian rows.
pub fn sample_uniform_sphere(n: usize, d: usize, seed: u64) -> Result<SphereDataset> {
    if n == 0 || d < 2 {
        return Err(Error::InvalidInput(format!("need n >= 1, d >= 2, got ({n}, {d})")));
    }
    let mut points = DMatrix::zeros(n, d);
    for i in 0..n {
        let row = gaussian_row(seed, i, d);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (j, v) in row.iter().enumerate() {
            points[(i, j)] = v / norm;
        }
    }
    SphereDataset::from_points(points)
}

/// Maximal `|rho_ij|` of the uniform sample, streamed over column chunks so
/// the `n x d` matrix is never materialized. Draws the same Gaussians as
/// [`sample_uniform_sphere`] for the same seed.
pub fn uniform_rho_max(n: usize, d: usize, seed: u64) -> Result<f64> {
    if n < 2 || d < 2 {
        return Err(Error::InvalidInput(format!("need n >= 2, d >= 2, got ({n}, {d})")));
    }
    let chunk = (1 << 22) / n.max(1);
    let chunk = chunk.clamp(64, d);
    let mut streams: Vec<_> = (0..n).map(|i| rng::substream2(seed, 3, i as u64)).collect();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    let mut col = 0usize;
    let mut block = vec![0.0f64; chunk];
    while col < d {
        let width = chunk.min(d - col);
        let mut xc = DMatrix::<f64>::zeros(n, width);
        for (i, stream) in streams.iter_mut().enumerate() {
            rng::fill_normal(stream, &mut block[..width]);
            for (j, v) in block[..width].iter().enumerate() {
                xc[(i, j)] = *v;
            }
        }
        gram.gemm(1.0, &xc, &xc.transpose(), 1.0);
        col += width;
    }
    let mut rho_max = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            let rho = gram[(i, j)] / (gram[(i, i)] * gram[(j, j)]).sqrt();
            rho_max = rho_max.max(rho.abs());
        }
    }
    Ok(rho_max)
}

/// A greedy polarized packing plus the rejection evidence behind its
/// (probable but unproven) maximality.
#[derive(Debug, Clone)]
pub struct PackingResult {
    pub dataset: SphereDataset,
    pub consecutive_rejections: usize,
    pub total_candidates: usize,
}

/// Greedy packing under the polarized distance: accept a uniform candidate
/// when both `x - x_i` and `x + x_i` are longer than `r` for every accepted
/// point; stop after `max_rejections` consecutive failures.
pub fn greedy_polarized_packing(
    d: usize,
    r: f64,
    seed: u64,
    max_rejections: usize,
) -> Result<PackingResult> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidInput(format!("packing radius {r} outside (0, 1]")));
    }
    if d < 2 {
        return Err(Error::InvalidInput(format!("need d >= 2, got {d}")));
    }
    let mut stream = rng::substream2(seed, 4, 0);
    let mut accepted: Vec<Vec<f64>> = Vec::new();
    let mut rejections = 0usize;
    let mut total = 0usize;
    let mut cand = vec![0.0f64; d];
    while rejections < max_rejections {
        rng::fill_normal(&mut stream, &mut cand);
        let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
        cand.iter_mut().for_each(|v| *v /= norm);
        total += 1;
        let ok = accepted.iter().all(|x| {
            let dot: f64 = x.iter().zip(&cand).map(|(a, b)| a * b).sum();
            // ||x - y||^2 = 2 - 2<x,y>, ||x + y||^2 = 2 + 2<x,y>.
            (2.0 - 2.0 * dot) > r * r && (2.0 + 2.0 * dot) > r * r
        });
        if ok {
            accepted.push(cand.clone());
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    let n = accepted.len();
    let flat: Vec<f64> = accepted.into_iter().flatten().collect();
    let dataset = SphereDataset::from_points(DMatrix::from_row_slice(n, d, &flat))?;
    Ok(PackingResult { dataset, consecutive_rejections: rejections, total_candidates: total })
}

/// Summary statistics of the cached correlations, including the packing
/// band check on the maximal signed inner product:
/// `1 - 18.2 e^{-2 log n / d} < max <x_i, x_j> < 1 - 0.06 e^{-2 log n / (d-1)}`.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationStats {
    pub n: usize,
    pub d: usize,
    pub rho_max: f64,
    pub max_signed: f64,
    pub mean: f64,
    pub sd: f64,
    pub histogram: Vec<usize>,
    pub histogram_lo: f64,
    pub histogram_hi: f64,
    pub packing_band_lower: f64,
    pub packing_band_upper: f64,
    pub packing_band_holds: bool,
}

pub fn correlation_stats(ds: &SphereDataset) -> CorrelationStats {
    let n = ds.n();
    let d = ds.d();
    let corr = ds.correlations();
    let m = corr.len().max(1) as f64;
    let mean = corr.iter().sum::<f64>() / m;
    let sd = (corr.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / m).sqrt();
    let max_signed = corr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bins = 40usize;
    let mut histogram = vec![0usize; bins];
    for &r in corr {
        let idx = (((r + 1.0) / 2.0) * bins as f64) as usize;
        histogram[idx.min(bins - 1)] += 1;
    }
    let ln_n = (n as f64).ln();
    let lower = 1.0 - 18.2 * (-2.0 * ln_n / d as f64).exp();
    let upper = 1.0 - 0.06 * (-2.0 * ln_n / (d as f64 - 1.0)).exp();
    CorrelationStats {
        n,
        d,
        rho_max: ds.rho_max(),
        max_signed,
        mean,
        sd,
        histogram,
        histogram_lo: -1.0,
        histogram_hi: 1.0,
        packing_band_lower: lower,
        packing_band_upper: upper,
        packing_band_holds: corr.is_empty() || (lower < max_signed && max_signed < upper),
    }
}
