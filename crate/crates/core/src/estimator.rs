//! Monte Carlo side: correlated q-Exponential panels, the covariance
//! estimator `c = X X^T / T`, its spectral moments and eigenvalue histograms.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::QExpParams;
use crate::error::{Error, Result};
use crate::resolvent::SpectralMoments;
use crate::rng::rng_from_seed;
use crate::tensor::{DenseMatrix, Dims, RotationTensor};

pub const EIGEN_CAPACITY: usize = 1024;

/// `N x T` sample matrix `X_{i,t} = O_{i,t}^{p,l} Y_{p,l}` with iid `Y`.
#[derive(Debug, Clone)]
pub struct Panel {
    pub dims: Dims,
    pub x: DMatrix<f64>,
    pub seed: u64,
    pub params: QExpParams<f64>,
    pub rotation: Arc<RotationTensor<f64>>,
}

impl Panel {
    pub fn new(
        x: DMatrix<f64>,
        seed: u64,
        params: QExpParams<f64>,
        rotation: Arc<RotationTensor<f64>>,
    ) -> Result<Self> {
        let dims = rotation.dims();
        if x.nrows() != dims.n || x.ncols() != dims.t {
            return Err(Error::Dimension(format!(
                "panel is {} x {} but the rotation tensor is for N = {}, T = {}",
                x.nrows(),
                x.ncols(),
                dims.n,
                dims.t
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("panel has non-finite entries".into()));
        }
        Ok(Panel {
            dims,
            x,
            seed,
            params,
            rotation,
        })
    }
}

pub(crate) fn to_nalgebra(m: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Applies a rotation tensor to flat iid draws, using the factorised form when
/// there is one: `X = A Y B^T` for `O = A (x) B`.
#[derive(Debug, Clone)]
pub struct CorrelatedSampler {
    dims: Dims,
    op: Operator,
}

#[derive(Debug, Clone)]
enum Operator {
    Identity,
    Kronecker(DMatrix<f64>, DMatrix<f64>),
    Dense(DMatrix<f64>),
}

impl CorrelatedSampler {
    pub fn new(o: &RotationTensor<f64>) -> Self {
        let op = if o.is_identity() {
            Operator::Identity
        } else if let Some((a, b)) = o.factors() {
            Operator::Kronecker(to_nalgebra(&a), to_nalgebra(&b).transpose())
        } else {
            Operator::Dense(to_nalgebra(&o.to_dense()))
        };
        CorrelatedSampler { dims: o.dims(), op }
    }

    /// `y` in flat order `a = i T + t`.
    pub fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let (n, t) = (self.dims.n, self.dims.t);
        let ym = DMatrix::from_row_slice(n, t, y);
        match &self.op {
            Operator::Identity => ym,
            Operator::Kronecker(a, bt) => a * ym * bt,
            Operator::Dense(o) => {
                let v = o * DVector::from_column_slice(y);
                DMatrix::from_row_slice(n, t, v.as_slice())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, p: &QExpParams<f64>, rng: &mut R) -> DMatrix<f64> {
        let s = p.sampler();
        let y: Vec<f64> = (0..self.dims.flat_len()).map(|_| rng.sample(s)).collect();
        self.apply(&y)
    }
}

pub fn sample_panel(o: &Arc<RotationTensor<f64>>, p: &QExpParams<f64>, seed: u64) -> Result<Panel> {
    let mut rng = rng_from_seed(seed);
    let x = CorrelatedSampler::new(o).sample(p, &mut rng);
    Panel::new(x, seed, *p, Arc::clone(o))
}

/// Symmetric positive semidefinite `c = X X^T / T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub c: DMatrix<f64>,
    pub samples: usize,
}

impl CovarianceEstimate {
    /// From an `N x T` sample matrix. Only the upper triangle is computed and
    /// mirrored, so the result is exactly symmetric.
    pub fn from_samples(x: &DMatrix<f64>) -> Self {
        let (n, t) = (x.nrows(), x.ncols());
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = x.row(i).dot(&x.row(j)) / t as f64;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        CovarianceEstimate { c, samples: t }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn ratio(&self) -> f64 {
        self.dim() as f64 / self.samples as f64
    }

    pub fn is_symmetric(&self) -> bool {
        self.c == self.c.transpose()
    }
}

pub fn covariance(panel: &Panel) -> CovarianceEstimate {
    CovarianceEstimate::from_samples(&panel.x)
}

/// `m_k = Tr(c^k) / N` for `k = 0..=n_max`.
pub fn empirical_spectral_moments(c: &CovarianceEstimate, n_max: usize) -> SpectralMoments<f64> {
    let n = c.dim();
    let mut values = vec![1.0];
    let mut power = c.c.clone();
    for k in 1..=n_max {
        if k > 1 {
            power = &power * &c.c;
        }
        values.push(power.trace() / n as f64);
    }
    SpectralMoments {
        ratio: c.ratio(),
        values,
    }
}

/// Eigenvalues in increasing order.
pub fn eigenvalues(c: &CovarianceEstimate) -> Result<Vec<f64>> {
    let n = c.dim();
    if n > EIGEN_CAPACITY {
        return Err(Error::Capacity {
            what: "eigen decomposition size N",
            requested: n,
            limit: EIGEN_CAPACITY,
        });
    }
    let eig = c.c.clone().try_symmetric_eigen(1e-14, 10_000).ok_or_else(|| {
        let scale = c.c.amax();
        let diag_min = c.c.diagonal().min();
        Error::Numeric(format!(
            "symmetric eigensolver did not converge (N = {n}, max |c| = {scale:e}, min diagonal = {diag_min:e})"
        ))
    })?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges; both equal for a degenerate spectrum.
    pub edges: Vec<f64>,
    /// Fraction of eigenvalues per bin, summing to one.
    pub mass: Vec<f64>,
    pub log_spaced: bool,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| {
                if self.log_spaced {
                    (w[0] * w[1]).sqrt()
                } else {
                    0.5 * (w[0] + w[1])
                }
            })
            .collect()
    }

    pub fn max_width(&self) -> f64 {
        self.edges
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Mass in bins lying entirely inside `[lo - slack, hi + slack]`.
    pub fn mass_within(&self, lo: f64, hi: f64, slack: f64) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.mass)
            .filter(|(w, _)| w[0] >= lo - slack && w[1] <= hi + slack)
            .map(|(_, m)| m)
            .sum()
    }

    pub fn mass_above(&self, x: f64) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.mass)
            .filter(|(w, _)| w[0] >= x)
            .map(|(_, m)| m)
            .sum()
    }
}

/// Histogram of pooled eigenvalues. Equal-width bins over `[min, max]`, or
/// geometric bins when `log_spaced` and the spectrum is strictly positive.
pub fn histogram(values: &[f64], bins: usize, log_spaced: bool) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidParameter {
            name: "bins",
            value: 0.0,
            reason: "need at least one bin",
        });
    }
    if values.is_empty() {
        return Err(Error::Dimension("no eigenvalues to histogram".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if spread <= 1e-12 * hi.abs().max(1.0) {
        return Ok(Histogram {
            edges: vec![lo, hi],
            mass: vec![1.0],
            log_spaced: false,
        });
    }
    let log_spaced = log_spaced && lo > 0.0;
    let edges: Vec<f64> = (0..=bins)
        .map(|k| {
            let f = k as f64 / bins as f64;
            if log_spaced {
                lo * (hi / lo).powf(f)
            } else {
                lo + spread * f
            }
        })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let f = if log_spaced {
            (v / lo).ln() / (hi / lo).ln()
        } else {
            (v - lo) / spread
        };
        let k = ((f * bins as f64) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = values.len() as f64;
    Ok(Histogram {
        edges,
        mass: counts.into_iter().map(|c| c as f64 / total).collect(),
        log_spaced,
    })
}

pub fn eigenvalue_histogram(
    c: &CovarianceEstimate,
    bins: usize,
    log_spaced: bool,
) -> Result<Histogram> {
    histogram(&eigenvalues(c)?, bins, log_spaced)
}

/// Seed-averaged moments with standard errors of the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMoments {
    pub ratio: f64,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub panels: usize,
}

impl MonteCarloMoments {
    pub fn as_moments(&self) -> SpectralMoments<f64> {
        SpectralMoments {
            ratio: self.ratio,
            values: self.mean.clone(),
        }
    }
}

/// Empirical moments of one panel per seed. Panels run in parallel; the
/// reduction walks seeds in the given order, so the result does not depend
/// on scheduling.
pub fn monte_carlo_moments(
    o: &Arc<RotationTensor<f64>>,
    p: &QExpParams<f64>,
    seeds: &[u64],
    n_max: usize,
) -> Result<MonteCarloMoments> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| {
            Ok(empirical_spectral_moments(&covariance(&sample_panel(o, p, seed)?), n_max).values)
        })
        .collect::<Result<Vec<_>>>()?;
    let panels = per_seed.len();
    if panels == 0 {
        return Err(Error::InvalidParameter {
            name: "seeds",
            value: 0.0,
            reason: "at least one seed is required",
        });
    }
    let mut mean = vec![0.0; n_max + 1];
    for v in &per_seed {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= panels as f64);
    let mut var = vec![0.0; n_max + 1];
    for v in &per_seed {
        for ((s, x), m) in var.iter_mut().zip(v).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let std_error = var
        .iter()
        .map(|s| {
            if panels > 1 {
                (s / (panels - 1) as f64 / panels as f64).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(MonteCarloMoments {
        ratio: o.dims().ratio(),
        mean,
        std_error,
        panels,
    })
}

/// Eigenvalues of every panel, concatenated in seed order.
pub fn pooled_eigenvalues(
    o: &Arc<RotationTensor<f64>>,
    p: &QExpParams<f64>,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| eigenvalues(&covariance(&sample_panel(o, p, seed)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.concat())
}

/// JSON sidecar written next to a panel CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub params: QExpParams<f64>,
    pub rotation: String,
}

/// Row-major CSV with a header row `t1,...,tT`; one row per asset.
pub fn write_matrix_csv<W: Write>(writer: W, m: &DMatrix<f64>, prefix: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record((1..=m.ncols()).map(|j| format!("{prefix}{j}")))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: std::io::Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Dimension(format!(
                "row {} has {} fields, header has {cols}",
                rows + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Numeric(format!("cannot parse {field:?} as a number")))?;
            data.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn read_matrix_csv_path(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix_csv(BufReader::new(File::open(path)?))
}

pub fn read_dense_matrix_csv(path: &Path) -> Result<DenseMatrix<f64>> {
    let m = read_matrix_csv_path(path)?;
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        data.extend(m.row(i).iter().copied());
    }
    DenseMatrix::from_row_major(m.nrows(), m.ncols(), data)
}

/// Writes `stem.csv` and `stem.json`.
pub fn export_panel(panel: &Panel, dir: &Path, stem: &str, rotation: &str) -> Result<()> {
    let csv_path = dir.join(format!("{stem}.csv"));
    write_matrix_csv(BufWriter::new(File::create(csv_path)?), &panel.x, "t")?;
    let meta = PanelMeta {
        n: panel.dims.n,
        t: panel.dims.t,
        seed: panel.seed,
        params: panel.params,
        rotation: rotation.to_string(),
    };
    let mut f = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f)?;
    Ok(())
}

pub fn import_panel(dir: &Path, stem: &str) -> Result<(DMatrix<f64>, PanelMeta)> {
    let x = read_matrix_csv_path(&dir.join(format!("{stem}.csv")))?;
    let meta: PanelMeta = serde_json::from_reader(BufReader::new(File::open(
        dir.join(format!("{stem}.json")),
    )?))?;
    if x.nrows() != meta.n || x.ncols() != meta.t {
        return Err(Error::Dimension(format!(
            "CSV is {} x {} but sidecar says N = {}, T = {}",
            x.nrows(),
            x.ncols(),
            meta.n,
            meta.t
        )));
    }
    Ok((x, meta))
}
