//! Command-line surface: duality tables, limit curves, depth reports,
//! spectra, and feature benchmarks, all fully determined by the seed.

use crate::branching;
use crate::duality::{self, Pgf};
use crate::features;
use crate::hermite::{ActivationFn, ActivationSpec};
use crate::kernel::{self, CompositionalKernel, CurveTable};
use crate::memorization::{self, CorrelationSource};
use crate::spectral;
use crate::sphere::{self, SphereDataset};
use crate::{Error, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "compker",
    version,
    about = "Compositional kernels of deep networks via branching-process duality"
)]
pub struct Cli {
    /// Master seed; every random quantity derives from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Hermite truncation level for coefficient estimation.
    #[arg(long = "trunc-level", global = true, default_value_t = crate::DEFAULT_TRUNCATION)]
    pub trunc_level: usize,
    /// Degree cap for exact generation-size distributions.
    #[arg(long = "degree-cap", global = true, default_value_t = crate::DEFAULT_DEGREE_CAP)]
    pub degree_cap: usize,
    /// Monte-Carlo sample count for coefficient estimation.
    #[arg(long = "mc-samples", global = true, default_value_t = crate::DEFAULT_MC_SAMPLES)]
    pub mc_samples: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LimitMode {
    Unscaled,
    Rescaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    /// Legendre features over sphere-normalized directions.
    #[value(name = "1")]
    LegendreSphere,
    /// Compressed-activation Hermite features over raw Gaussian directions.
    #[value(name = "2")]
    HermiteGaussian,
    /// Algorithm 2 plus noise re-injecting the truncated mass.
    #[value(name = "2-noised")]
    HermiteNoised,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimated offspring statistics (mu, mu*, a_1^2, xi) per activation,
    /// un-centered and centered, with Monte-Carlo standard errors.
    Table2 {
        /// Built-in names or spec-file paths, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "relu,gelu,sigmoid,swish")]
        activations: Vec<String>,
    },
    /// Depth-indexed kernel curves with their theoretical limits.
    Limits {
        #[arg(long)]
        activation: String,
        /// Drop the constant Hermite coefficient before normalizing.
        #[arg(long)]
        centered: bool,
        #[arg(long, value_enum)]
        mode: LimitMode,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,5,10,30")]
        depths: Vec<usize>,
        #[arg(long = "grid-points", default_value_t = 41)]
        grid_points: usize,
        /// Simulation trials for the rescaled-limit prediction.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Depth report for epsilon-closeness or kappa-memorization.
    Depth {
        #[arg(long)]
        activation: String,
        #[arg(long)]
        centered: bool,
        /// Dataset file (CSV or binary); mutually exclusive with --n/--d/--rho.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Sample a fresh uniform spherical dataset of this size.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        /// Use this correlation level directly instead of a dataset.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Sphere-harmonic eigenvalues of the depth-L kernel in dimension d.
    Spectrum {
        #[arg(long)]
        activation: String,
        #[arg(long)]
        centered: bool,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long = "k-max", default_value_t = 12)]
        k_max: usize,
    },
    /// Generate a spherical dataset file (uniform or polarized packing).
    Dataset {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: usize,
        /// Polarized-packing radius; switches from uniform sampling to the
        /// greedy packing (then --n is ignored).
        #[arg(long)]
        r: Option<f64>,
        #[arg(long = "max-rejections", default_value_t = 100_000)]
        max_rejections: usize,
    },
    /// Random-feature matrix plus a Gram-error and truncation report.
    Features {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        activation: String,
        #[arg(long)]
        centered: bool,
        #[arg(long, default_value_t = 1)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        #[arg(long, value_enum)]
        algorithm: Algorithm,
        /// Where to write the feature matrix (binary; `.csv` for text).
        #[arg(long = "matrix-out")]
        matrix_out: Option<PathBuf>,
    },
}

/// Shared provenance record attached to every report.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub mc_samples: usize,
    pub trunc_level: usize,
    pub degree_cap: usize,
    pub version: &'static str,
}

impl Provenance {
    fn of(cli: &Cli) -> Self {
        Self {
            seed: cli.seed,
            mc_samples: cli.mc_samples,
            trunc_level: cli.trunc_level,
            degree_cap: cli.degree_cap,
            version: VERSION,
        }
    }

    fn csv_header(&self) -> &'static str {
        "seed,mc_samples,trunc_level,degree_cap,version"
    }

    fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.seed, self.mc_samples, self.trunc_level, self.degree_cap, self.version
        )
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

/// Resolve an activation argument: a spec-file path (anything ending in
/// `.json`), `identity`, or a built-in estimated by Monte Carlo.
pub fn resolve_activation(
    name: &str,
    centered: bool,
    trunc: usize,
    samples: usize,
    seed: u64,
) -> Result<ActivationSpec> {
    let raw = if name.ends_with(".json") {
        let file = File::open(Path::new(name))?;
        serde_json::from_reader::<_, ActivationSpec>(file)?
    } else if name == "identity" {
        ActivationSpec::identity()
    } else {
        let sigma = ActivationFn::builtin(name)?;
        crate::hermite::estimate_coefficients(&sigma, trunc, samples, seed)?
    };
    if centered {
        raw.center_and_normalize()
    } else {
        raw.normalize()
    }
}

fn resolve_pgf(
    name: &str,
    centered: bool,
    trunc: usize,
    samples: usize,
    seed: u64,
) -> Result<Pgf> {
    duality::pgf_from_activation(&resolve_activation(name, centered, trunc, samples, seed)?)
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn run(cli: Cli) -> Result<()> {
    let mut out = open_out(&cli.out)?;
    match &cli.command {
        Command::Table2 { activations } => cmd_table2(&cli, activations, &mut out),
        Command::Limits { activation, centered, mode, depths, grid_points, trials } => {
            cmd_limits(&cli, activation, *centered, *mode, depths, *grid_points, *trials, &mut out)
        }
        Command::Depth { activation, centered, dataset, n, d, rho, kappa, epsilon } => cmd_depth(
            &cli,
            activation,
            *centered,
            dataset.as_deref(),
            *n,
            *d,
            *rho,
            *kappa,
            *epsilon,
            &mut out,
        ),
        Command::Dataset { n, d, r, max_rejections } => {
            let ds = match r {
                Some(r) => {
                    sphere::greedy_polarized_packing(*d, *r, cli.seed, *max_rejections)?.dataset
                }
                None => {
                    let n = n.ok_or_else(|| {
                        Error::InvalidInput("--n required for uniform sampling".into())
                    })?;
                    sphere::sample_uniform_sphere(n, *d, cli.seed)?
                }
            };
            match cli.format {
                Format::Csv => ds.write_csv(&mut out),
                Format::Json => {
                    serde_json::to_writer_pretty(&mut *out, &sphere::correlation_stats(&ds))?;
                    writeln!(out)?;
                    Ok(())
                }
            }
        }
        Command::Spectrum { activation, centered, depth, dim, k_max } => {
            cmd_spectrum(&cli, activation, *centered, *depth, *dim, *k_max, &mut out)
        }
        Command::Features { dataset, activation, centered, depth, m, algorithm, matrix_out } => {
            cmd_features(
                &cli,
                dataset,
                activation,
                *centered,
                *depth,
                *m,
                *algorithm,
                matrix_out.as_deref(),
                &mut out,
            )
        }
    }?;
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// table2

const TABLE2_REPLICATES: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct Table2Row {
    pub activation: String,
    pub variant: &'static str,
    pub mu: f64,
    pub mu_stderr: f64,
    pub mu_star: f64,
    pub mu_star_stderr: f64,
    pub mu_star_lower_bound_only: bool,
    pub a1_sq: f64,
    pub a1_sq_stderr: f64,
    pub xi: f64,
    pub xi_stderr: f64,
}

#[derive(Debug, Serialize)]
struct Table2Report<'a> {
    report: &'static str,
    provenance: &'a Provenance,
    rows: &'a [Table2Row],
}

fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Offspring statistics for one activation variant over estimation replicates.
pub fn table2_rows(
    name: &str,
    trunc: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<Table2Row>> {
    let per_rep = (samples / TABLE2_REPLICATES).max(1);
    let mut stats: Vec<Vec<[f64; 4]>> = vec![Vec::new(), Vec::new()];
    for rep in 0..TABLE2_REPLICATES {
        let rep_seed = seed ^ (rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for (slot, centered) in [(0usize, false), (1usize, true)] {
            let spec = resolve_activation(name, centered, trunc, per_rep, rep_seed)?;
            let g = duality::pgf_from_activation(&spec)?;
            // p_1 = 1 has every point fixed; the process survives
            // deterministically, so its extinction probability is 0.
            let xi = match duality::extinction_probability(&g) {
                Ok(v) => v,
                Err(Error::Degenerate(_)) => 0.0,
                Err(e) => return Err(e),
            };
            stats[slot].push([g.mean(), g.mustar().value, g.prob(1), xi]);
        }
    }
    let lb = |centered: bool| -> Result<bool> {
        let spec = resolve_activation(name, centered, trunc, per_rep, seed)?;
        Ok(duality::pgf_from_activation(&spec)?.mustar().lower_bound_only)
    };
    let mut rows = Vec::with_capacity(2);
    for (slot, variant) in [(0usize, "uncentered"), (1usize, "centered")] {
        let col = |i: usize| -> (f64, f64) {
            mean_stderr(&stats[slot].iter().map(|row| row[i]).collect::<Vec<_>>())
        };
        let (mu, mu_stderr) = col(0);
        let (mu_star, mu_star_stderr) = col(1);
        let (a1_sq, a1_sq_stderr) = col(2);
        let (xi, xi_stderr) = col(3);
        rows.push(Table2Row {
            activation: name.to_string(),
            variant,
            mu,
            mu_stderr,
            mu_star,
            mu_star_stderr,
            mu_star_lower_bound_only: lb(variant == "centered")?,
            a1_sq,
            a1_sq_stderr,
            xi,
            xi_stderr,
        });
    }
    Ok(rows)
}

fn cmd_table2(cli: &Cli, activations: &[String], out: &mut dyn Write) -> Result<()> {
    let prov = Provenance::of(cli);
    let mut rows = Vec::new();
    for name in activations {
        rows.extend(table2_rows(name, cli.trunc_level, cli.mc_samples, cli.seed)?);
    }
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut *out,
                &Table2Report { report: "table2", provenance: &prov, rows: &rows },
            )?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(
                out,
                "activation,variant,mu,mu_stderr,mu_star,mu_star_stderr,\
                 mu_star_lower_bound_only,a1_sq,a1_sq_stderr,xi,xi_stderr,{}",
                prov.csv_header()
            )?;
            for r in &rows {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.activation,
                    r.variant,
                    fmt(r.mu),
                    fmt(r.mu_stderr),
                    fmt(r.mu_star),
                    fmt(r.mu_star_stderr),
                    r.mu_star_lower_bound_only,
                    fmt(r.a1_sq),
                    fmt(r.a1_sq_stderr),
                    fmt(r.xi),
                    fmt(r.xi_stderr),
                    prov.csv_fields()
                )?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// limits

#[derive(Debug, Serialize)]
struct LimitsReport<'a> {
    report: &'static str,
    provenance: &'a Provenance,
    activation: &'a str,
    centered: bool,
    curves: &'a CurveTable,
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_limits(
    cli: &Cli,
    activation: &str,
    centered: bool,
    mode: LimitMode,
    depths: &[usize],
    grid_points: usize,
    trials: usize,
    out: &mut dyn Write,
) -> Result<()> {
    if grid_points == 0 {
        return Err(Error::InvalidInput("grid-points must be >= 1".into()));
    }
    let g = resolve_pgf(activation, centered, cli.trunc_level, cli.mc_samples, cli.seed)?;
    let table = match mode {
        LimitMode::Unscaled => {
            kernel::unscaled_limit_curve(&g, depths, &linspace(-1.0, 1.0, grid_points))?
        }
        LimitMode::Rescaled => kernel::rescaled_limit_curve(
            &g,
            depths,
            &linspace(0.0, 5.0, grid_points),
            trials,
            cli.seed,
        )?,
    };
    let prov = Provenance::of(cli);
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut *out,
                &LimitsReport {
                    report: "limits",
                    provenance: &prov,
                    activation,
                    centered,
                    curves: &table,
                },
            )?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "L,{},value,prediction,{}", table.x_label, prov.csv_header())?;
            for p in &table.points {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    p.depth,
                    fmt(p.x),
                    fmt(p.value),
                    fmt(p.prediction),
                    prov.csv_fields()
                )?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// depth

#[derive(Debug, Serialize)]
struct DepthReportFile<'a> {
    report: &'static str,
    provenance: &'a Provenance,
    activation: &'a str,
    centered: bool,
    body: &'a memorization::DepthReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_depth(
    cli: &Cli,
    activation: &str,
    centered: bool,
    dataset: Option<&Path>,
    n: Option<usize>,
    d: Option<usize>,
    rho: Option<f64>,
    kappa: Option<f64>,
    epsilon: Option<f64>,
    out: &mut dyn Write,
) -> Result<()> {
    let g = resolve_pgf(activation, centered, cli.trunc_level, cli.mc_samples, cli.seed)?;
    let loaded;
    let sampled;
    let source = if let Some(path) = dataset {
        loaded = SphereDataset::read_path(path)?;
        CorrelationSource::Dataset(&loaded)
    } else if let Some(r) = rho {
        CorrelationSource::Rho(r)
    } else if let (Some(n), Some(d)) = (n, d) {
        sampled = sphere::sample_uniform_sphere(n, d, cli.seed)?;
        CorrelationSource::Dataset(&sampled)
    } else {
        return Err(Error::InvalidInput(
            "need --dataset, --rho, or both --n and --d".into(),
        ));
    };
    let body = match (kappa, epsilon) {
        (Some(k), None) => memorization::memorization_depth_bounds(&g, &source, k, n)?,
        (None, Some(e)) => memorization::epsilon_closeness_depth(&g, &source, e)?,
        _ => {
            return Err(Error::InvalidInput(
                "pass exactly one of --kappa or --epsilon".into(),
            ))
        }
    };
    let prov = Provenance::of(cli);
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut *out,
                &DepthReportFile {
                    report: "depth",
                    provenance: &prov,
                    activation,
                    centered,
                    body: &body,
                },
            )?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "key,value,{}", prov.csv_header())?;
            let p = prov.csv_fields();
            let mut kv = |k: &str, v: String| writeln!(out, "{k},{v},{p}");
            kv("activation", activation.to_string())?;
            kv("centered", centered.to_string())?;
            kv("exact", body.exact.map_or("".into(), |v| v.to_string()))?;
            kv("lower", fmt(body.lower))?;
            kv("upper", fmt(body.upper))?;
            kv("regime", format!("{:?}", body.regime))?;
            kv("rho", fmt(body.rho))?;
            kv("target", fmt(body.target))?;
            kv("n", body.n.map_or("".into(), |v| v.to_string()))?;
            kv("d", body.d.map_or("".into(), |v| v.to_string()))?;
            for (name, value) in &body.components {
                kv(name, fmt(*value))?;
            }
            kv("warnings", body.warnings.join("; "))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// spectrum

#[derive(Debug, Serialize)]
struct SpectrumReportFile<'a> {
    report: &'static str,
    provenance: &'a Provenance,
    activation: &'a str,
    centered: bool,
    depth: usize,
    body: &'a spectral::SpectrumReport,
    lambda_quadrature: &'a [f64],
}

fn cmd_spectrum(
    cli: &Cli,
    activation: &str,
    centered: bool,
    depth: usize,
    dim: usize,
    k_max: usize,
    out: &mut dyn Write,
) -> Result<()> {
    let g = resolve_pgf(activation, centered, cli.trunc_level, cli.mc_samples, cli.seed)?;
    let z = branching::exact_generation_distribution(&g, depth, cli.degree_cap)?;
    let body = spectral::eigenvalues(k_max, dim, &z)?;
    // Cross-check by direct quadrature of the kernel against each Legendre
    // basis function; node count covers the full coefficient degree.
    let quad = spectral::gauss_jacobi(z.coefficients.len() + k_max + 8, dim)?;
    let quad_vals: Vec<f64> = (0..=k_max)
        .map(|k| spectral::eigenvalue_by_quadrature(|t| z.eval(t), k, dim, &quad))
        .collect();
    let prov = Provenance::of(cli);
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut *out,
                &SpectrumReportFile {
                    report: "spectrum",
                    provenance: &prov,
                    activation,
                    centered,
                    depth,
                    body: &body,
                    lambda_quadrature: &quad_vals,
                },
            )?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(
                out,
                "k,lambda_k,N_k_d,lambda_times_mult,lambda_quadrature,\
                 trace_check,tail_residual,{}",
                prov.csv_header()
            )?;
            for (k, lambda) in body.eigenvalues.iter().enumerate() {
                let mult = body.multiplicities[k];
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    k,
                    fmt(*lambda),
                    fmt(mult),
                    fmt(lambda * mult),
                    fmt(quad_vals[k]),
                    fmt(body.trace_check),
                    fmt(body.tail_residual),
                    prov.csv_fields()
                )?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// features

#[derive(Debug, Serialize)]
pub struct GramErrorReport {
    pub report: &'static str,
    pub provenance: Provenance,
    pub algorithm: String,
    pub depth: usize,
    pub n: usize,
    pub m: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub regularization_mass: f64,
    pub remainder_op_norm: f64,
    pub remainder_op_norm_bound: f64,
}

#[allow(clippy::too_many_arguments)]
fn cmd_features(
    cli: &Cli,
    dataset: &Path,
    activation: &str,
    centered: bool,
    depth: usize,
    m: usize,
    algorithm: Algorithm,
    matrix_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let g = resolve_pgf(activation, centered, cli.trunc_level, cli.mc_samples, cli.seed)?;
    let ds = SphereDataset::read_path(dataset)?;
    let z = branching::exact_generation_distribution(&g, depth, cli.degree_cap)?;
    let phi = match algorithm {
        Algorithm::LegendreSphere => {
            // alpha_k = lambda_k N_{k,d} from the exact eigenvalue series;
            // direct quadrature of the kernel is ill-conditioned at large
            // d and k because the N_{k,d} factor amplifies rounding.
            let spectrum = spectral::eigenvalues(cli.trunc_level, ds.d(), &z)?;
            let coefficients = spectrum
                .eigenvalues
                .iter()
                .zip(&spectrum.multiplicities)
                .map(|(l, n)| l * n)
                .collect();
            let exp = spectral::LegendreExpansion { dimension: ds.d(), coefficients };
            features::legendre_features(&ds, &exp, m, cli.seed)?
        }
        Algorithm::HermiteGaussian | Algorithm::HermiteNoised => {
            let spec =
                features::compressed_activation(&g, depth, cli.trunc_level, cli.degree_cap)?;
            let noise = match algorithm {
                Algorithm::HermiteNoised => Some(spec.truncated_tail.unwrap_or(0.0)),
                _ => None,
            };
            features::hermite_features(&ds, &spec, m, cli.seed, noise)?
        }
    };
    if let Some(path) = matrix_out {
        let mut w = BufWriter::new(File::create(path)?);
        if path.extension().is_some_and(|e| e == "csv") {
            phi.write_csv(&mut w)?;
        } else {
            phi.write_binary(&mut w)?;
        }
        w.flush()?;
    }
    let target = CompositionalKernel::new(g.clone(), depth);
    let gram = phi.gram();
    let mut max_err = 0.0f64;
    let mut sum_err = 0.0f64;
    let mut count = 0usize;
    for i in 0..ds.n() {
        for j in 0..ds.n() {
            let t = if i == j { 1.0 } else { ds.rho(i, j) };
            let err = (gram[(i, j)] - target.eval(t)).abs();
            max_err = max_err.max(err);
            sum_err += err;
            count += 1;
        }
    }
    let dec = features::truncation_decomposition(&ds, &z, cli.trunc_level)?;
    let report = GramErrorReport {
        report: "features",
        provenance: Provenance::of(cli),
        algorithm: format!("{algorithm:?}"),
        depth,
        n: ds.n(),
        m,
        max_abs_error: max_err,
        mean_abs_error: sum_err / count as f64,
        regularization_mass: dec.regularization_mass,
        remainder_op_norm: dec.remainder_op_norm,
        remainder_op_norm_bound: dec.op_norm_bound,
    };
    match cli.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, &report)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "key,value,{}", report.provenance.csv_header())?;
            let p = report.provenance.csv_fields();
            let mut kv = |k: &str, v: String| writeln!(out, "{k},{v},{p}");
            kv("algorithm", report.algorithm.clone())?;
            kv("depth", report.depth.to_string())?;
            kv("n", report.n.to_string())?;
            kv("m", report.m.to_string())?;
            kv("max_abs_error", fmt(report.max_abs_error))?;
            kv("mean_abs_error", fmt(report.mean_abs_error))?;
            kv("regularization_mass", fmt(report.regularization_mass))?;
            kv("remainder_op_norm", fmt(report.remainder_op_norm))?;
            kv("remainder_op_norm_bound", fmt(report.remainder_op_norm_bound))?;
        }
    }
    Ok(())
}
