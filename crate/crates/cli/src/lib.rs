//! `qwick` command-line driver. [`run`] takes argv and the output streams and
//! returns the process exit code, so tests can drive it in-process.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use qwick_core::estimator::{
    export_panel, histogram, monte_carlo_moments, pooled_eigenvalues, sample_panel,
};
use qwick_core::inverse::{fit, ModelSpec, Parameterization};
use qwick_core::resolvent::{
    check_planar_consistency, resolvent_identity_check, MomentPatterns, SpectralMoments,
};
use qwick_core::tensor::{Dims, FlatIndex, RotationTensor};
use qwick_core::wick::{moment_polynomial, MomentWeights};

pub use config::{Common, Format, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Compute(#[from] qwick_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use qwick_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Compute(E::InvalidParameter { .. } | E::Specification(_)) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qwick",
    version,
    about = "Wick moments and planar spectral moments for correlated q-Exponential variables"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the density on a uniform grid.
    Pdf {
        /// Grid half-width in units of sigma.
        #[arg(long, default_value_t = 8.0)]
        width: f64,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Draw correlated panels and write panel_SEED.csv / panel_SEED.json into --out.
    Sample,
    /// Exact Wick moment of the listed slots.
    Moment {
        /// Comma-separated 1-based asset:time pairs, e.g. 1:1,2:1,1:2,2:2.
        #[arg(long)]
        slots: String,
    },
    /// Planar spectral moments, optionally against Monte Carlo over --seeds.
    Spectral {
        /// Use the Gaussian limit of the weights.
        #[arg(long)]
        gaussian: bool,
        /// Histogram the pooled Monte Carlo eigenvalues into this many bins (JSON only).
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        log_bins: bool,
    },
    /// Recover model parameters from a moments file.
    Fit {
        /// JSON moments file {"r": ..., "moments": [m0, m1, ...]}.
        #[arg(long)]
        moments: PathBuf,
        /// Parameterization; conflicts with --spec.
        #[arg(long, conflicts_with = "spec")]
        model: Option<String>,
        /// JSON model specification.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 4000)]
        budget: usize,
        #[arg(long)]
        fit_k: bool,
        /// Comma-separated weights for m_1, m_2, ...
        #[arg(long)]
        weights: Option<String>,
        /// Fit the Monte Carlo means of a `spectral --seeds` file instead of its planar moments.
        #[arg(long)]
        monte_carlo: bool,
    },
    /// Planar-consistency and resolvent identity checks.
    Check {
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Size of the random dense tensor, NxT; independent of --N/--T.
        #[arg(long, default_value = "2x2")]
        dims: String,
    },
}

/// Parses `argv`, runs the command and returns the exit code. Normal output
/// goes to `out` (or the `--out` file), diagnostics to `err`.
pub fn run<I, A>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))?;
    // Commands render into a buffer so the pool closure stays Send.
    let mut buf: Vec<u8> = Vec::new();
    let out_inner: &mut Vec<u8> = &mut buf;
    let result = pool.install(|| {
        let out: &mut dyn Write = out_inner;
        match &cli.command {
            Command::Pdf { width, points } => cmd_pdf(&cfg, *width, *points, out),
            Command::Sample => cmd_sample(&cfg, out),
            Command::Moment { slots } => cmd_moment(&cfg, slots, out),
            Command::Spectral {
                gaussian,
                bins,
                log_bins,
            } => cmd_spectral(&cfg, *gaussian, *bins, *log_bins, out),
            Command::Fit {
                moments,
                model,
                spec,
                budget,
                fit_k,
                weights,
                monte_carlo,
            } => cmd_fit(
                &cfg,
                moments,
                model.as_deref(),
                spec.as_deref(),
                *budget,
                *fit_k,
                weights.as_deref(),
                *monte_carlo,
                out,
            ),
            Command::Check { order, seed, dims } => cmd_check(&cfg, *order, *seed, dims, out),
        }
    });
    out.write_all(&buf)?;
    out.flush()?;
    result
}

/// Writes to `--out` when given, else to `out`.
fn emit(cfg: &RunConfig, out: &mut dyn Write, body: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(body.as_bytes())?;
            f.flush()?;
        }
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn cmd_pdf(
    cfg: &RunConfig,
    width: f64,
    points: usize,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let p = cfg.params()?;
    if points < 2 || !(width > 0.0) {
        return Err(CliError::Usage(
            "pdf needs --points >= 2 and --width > 0".into(),
        ));
    }
    let half = width * p.sigma();
    let xs: Vec<f64> = (0..points)
        .map(|i| -half + 2.0 * half * i as f64 / (points - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs.iter().map(|&x| p.pdf(x)).collect();
    let body = match cfg.format(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("x,pdf\n");
            for (x, y) in xs.iter().zip(&ys) {
                s.push_str(&format!("{x:?},{y:?}\n"));
            }
            s
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Table<'a> {
                k: f64,
                sigma: f64,
                x: &'a [f64],
                pdf: &'a [f64],
            }
            json(&Table {
                k: p.k(),
                sigma: p.sigma(),
                x: &xs,
                pdf: &ys,
            })?
        }
    };
    emit(cfg, out, &body)
}

fn cmd_sample(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let p = cfg.params()?;
    let o = cfg.rotation_tensor()?;
    let dir = cfg
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("sample needs --out DIR".into()))?;
    std::fs::create_dir_all(dir)?;
    let seeds = cfg.seeds.clone().unwrap_or_else(|| vec![0]);
    use rayon::prelude::*;
    let panels = seeds
        .par_iter()
        .map(|&s| sample_panel(&o, &p, s))
        .collect::<qwick_core::Result<Vec<_>>>()?;
    let mut listing = String::new();
    for panel in &panels {
        let stem = format!("panel_{}", panel.seed);
        export_panel(panel, dir, &stem, &cfg.rotation)?;
        listing.push_str(&format!("{}\n", dir.join(format!("{stem}.csv")).display()));
    }
    out.write_all(listing.as_bytes())?;
    Ok(())
}

fn parse_slots(s: &str, dims: Dims) -> Result<Vec<FlatIndex>, CliError> {
    s.split(',')
        .map(|item| {
            let bad = || {
                CliError::Usage(format!(
                    "cannot parse slot {item:?}; expected ASSET:TIME, 1-based"
                ))
            };
            let (i, t) = item.trim().split_once(':').ok_or_else(bad)?;
            let i: usize = i.trim().parse().map_err(|_| bad())?;
            let t: usize = t.trim().parse().map_err(|_| bad())?;
            if i == 0 || t == 0 {
                return Err(bad());
            }
            FlatIndex::new(i - 1, t - 1, dims).map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}

fn cmd_moment(cfg: &RunConfig, slots: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let p = cfg.params()?;
    let o = cfg.rotation_tensor()?;
    let idx = parse_slots(slots, o.dims())?;
    let expansion = moment_polynomial(&o, &idx)?;
    let value = MomentWeights::new(&p).average(&expansion.polynomial, o.dims())?;
    let body = match cfg.format(Format::Csv) {
        Format::Csv => format!(
            "slots,pairings,value\n\"{}\",{},{value:?}\n",
            slots.trim(),
            expansion.pairings
        ),
        Format::Json => {
            #[derive(Serialize)]
            struct MomentOut<'a> {
                slots: &'a str,
                pairings: u64,
                value: f64,
            }
            json(&MomentOut {
                slots: slots.trim(),
                pairings: expansion.pairings,
                value,
            })?
        }
    };
    emit(cfg, out, &body)
}

#[derive(Serialize)]
struct SpectralOut {
    r: f64,
    /// `m_0..=m_nmax`, so the file can be fed back to `fit`.
    moments: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<qwick_core::estimator::MonteCarloMoments>,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<qwick_core::estimator::Histogram>,
}

fn cmd_spectral(
    cfg: &RunConfig,
    gaussian: bool,
    bins: Option<usize>,
    log_bins: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let o = cfg.rotation_tensor()?;
    let n_max = cfg.nmax(3);
    let patterns = MomentPatterns::build(&o, n_max)?;
    let planar: SpectralMoments<f64> = if gaussian {
        patterns.evaluate_gaussian(cfg.sigma)?
    } else {
        patterns.evaluate(&cfg.params()?)?
    };
    let format = cfg.format(Format::Csv);
    if bins.is_some() && (format != Format::Json || cfg.seeds.is_none()) {
        return Err(CliError::Usage(
            "--bins needs --format json and --seeds".into(),
        ));
    }
    let (mc, hist) = match &cfg.seeds {
        Some(seeds) => {
            // Panels always use the finite-K law; --gaussian only changes the prediction.
            let p = cfg.params()?;
            let mc = monte_carlo_moments(&o, &p, seeds, n_max)?;
            let hist = match bins {
                Some(b) => Some(histogram(&pooled_eigenvalues(&o, &p, seeds)?, b, log_bins)?),
                None => None,
            };
            (Some(mc), hist)
        }
        None => (None, None),
    };
    let body = match format {
        Format::Csv => {
            let mut s = String::from(if mc.is_some() {
                "n,planar,mc_mean,mc_se\n"
            } else {
                "n,planar\n"
            });
            for n in 1..=n_max {
                s.push_str(&format!("{n},{:?}", planar.values[n]));
                if let Some(mc) = &mc {
                    s.push_str(&format!(",{:?},{:?}", mc.mean[n], mc.std_error[n]));
                }
                s.push('\n');
            }
            s
        }
        Format::Json => json(&SpectralOut {
            r: planar.ratio,
            moments: planar.values.clone(),
            monte_carlo: mc,
            histogram: hist,
        })?,
    };
    emit(cfg, out, &body)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    cfg: &RunConfig,
    moments: &Path,
    model: Option<&str>,
    spec: Option<&Path>,
    budget: usize,
    fit_k: bool,
    weights: Option<&str>,
    monte_carlo: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let text = std::fs::read_to_string(moments).map_err(|e| {
        CliError::Usage(format!(
            "cannot read moments file {}: {e}",
            moments.display()
        ))
    })?;
    let invalid =
        |e: String| CliError::Usage(format!("invalid moments file {}: {e}", moments.display()));
    let empirical: SpectralMoments<f64> = if monte_carlo {
        #[derive(serde::Deserialize)]
        struct WithMc {
            r: f64,
            monte_carlo: qwick_core::estimator::MonteCarloMoments,
        }
        let f: WithMc = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        SpectralMoments {
            ratio: f.r,
            values: f.monte_carlo.mean,
        }
    } else {
        serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?
    };
    let mut spec = match (model, spec) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read spec {}: {e}", path.display()))
            })?;
            serde_json::from_str::<ModelSpec>(&text)
                .map_err(|e| CliError::Usage(format!("invalid spec {}: {e}", path.display())))?
        }
        (model, None) => {
            let param: Parameterization = model.unwrap_or("scalar-sigma").parse()?;
            let dims = cfg.dims()?;
            let k = cfg.params_or(4.0)?.k();
            ModelSpec::new(param, dims.n, dims.t, k)
        }
    };
    spec.fit_k |= fit_k;
    let weights = weights
        .map(|w| {
            w.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| CliError::Usage(format!("cannot parse weight {x:?}")))
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let result = fit(&spec, &empirical, weights.as_deref(), budget)?;
    let body = match cfg.format(Format::Json) {
        Format::Json => json(&result)?,
        Format::Csv => {
            let mut s = String::from("name,value,lower,upper\n");
            for ((name, v), b) in result.names.iter().zip(&result.values).zip(&result.bounds) {
                s.push_str(&format!("{name},{v:?},{:?},{:?}\n", b.lower, b.upper));
            }
            s
        }
    };
    emit(cfg, out, &body)
}

#[derive(Serialize)]
struct CheckOut {
    n: usize,
    t: usize,
    k: f64,
    seed: u64,
    planar: qwick_core::resolvent::PlanarReport,
    identity_points: usize,
    identity_passed: bool,
    passed: bool,
}

fn cmd_check(
    cfg: &RunConfig,
    order: usize,
    seed: u64,
    dims: &str,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !(2..=3).contains(&order) {
        return Err(CliError::Usage(format!(
            "--order must be 2 or 3, got {order}"
        )));
    }
    let bad = || CliError::Usage(format!("cannot parse --dims {dims:?}; expected NxT"));
    let (n, t) = dims.split_once('x').ok_or_else(bad)?;
    let dims = Dims::new(
        n.trim().parse().map_err(|_| bad())?,
        t.trim().parse().map_err(|_| bad())?,
    )?;
    let p = cfg.params_or(4.0)?;
    let o = RotationTensor::random_dense(dims, seed, 0.5)?;
    let planar = check_planar_consistency(&o, &p, order)?;
    let zs = [
        Complex64::new(1.5, 0.0),
        Complex64::new(-0.7, 0.2),
        Complex64::new(0.3, -2.0),
        Complex64::new(4.0, 4.0),
    ];
    let mut identity_passed = true;
    for z in zs {
        for n in 0..=8 {
            identity_passed &= resolvent_identity_check(z, n)?;
        }
    }
    let report = CheckOut {
        n: dims.n,
        t: dims.t,
        k: p.k(),
        seed,
        passed: planar.passed() && identity_passed,
        planar,
        identity_points: zs.len() * 9,
        identity_passed,
    };
    let body = match cfg.format(Format::Json) {
        Format::Json => json(&report)?,
        Format::Csv => format!(
            "check,error,tolerance,passed\nplanar_polynomial,{:?},{:?},{}\nplanar_averaged,{:?},{:?},{}\nresolvent_identity,,,{}\n",
            report.planar.polynomial_error,
            report.planar.tolerance,
            report.planar.polynomial_error <= report.planar.tolerance,
            report.planar.averaged_error,
            report.planar.tolerance,
            report.planar.averaged_error <= report.planar.tolerance,
            report.identity_passed
        ),
    };
    emit(cfg, out, &body)?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "order {order}: polynomial error {:e}, averaged error {:e}, {} mismatching entries, identity {}",
            report.planar.polynomial_error,
            report.planar.averaged_error,
            report.planar.mismatches.len(),
            if report.identity_passed { "ok" } else { "failed" }
        )))
    }
}
