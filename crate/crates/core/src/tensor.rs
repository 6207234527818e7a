//! Index bookkeeping, small dense matrices and the rotation tensor `O` that
//! maps iid q-Exponentials `Y` to correlated variables `X = O Y`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Monomial, Poly, PolyMatrix};
use crate::scalar::Scalar;

pub const DENSE_CAPACITY: usize = 512;
pub const DEFAULT_DET_THRESHOLD: f64 = 1e-12;

/// Panel shape: `n` assets by `t` time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub t: usize,
}

impl Dims {
    pub fn new(n: usize, t: usize) -> Result<Self> {
        if n == 0 || t == 0 {
            return Err(Error::Dimension(format!(
                "N = {n}, T = {t} must be positive"
            )));
        }
        Ok(Dims { n, t })
    }

    pub fn flat_len(&self) -> usize {
        self.n * self.t
    }

    pub fn ratio(&self) -> f64 {
        self.n as f64 / self.t as f64
    }
}

/// Asset/time pair `(i, t)` stored as `a = i * T + t` (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlatIndex(usize);

impl FlatIndex {
    pub fn new(i: usize, t: usize, dims: Dims) -> Result<Self> {
        if i >= dims.n || t >= dims.t {
            return Err(Error::Dimension(format!(
                "index ({i}, {t}) outside {} x {}",
                dims.n, dims.t
            )));
        }
        Ok(FlatIndex(i * dims.t + t))
    }

    pub fn from_flat(a: usize, dims: Dims) -> Result<Self> {
        if a >= dims.flat_len() {
            return Err(Error::Dimension(format!(
                "flat index {a} outside 0..{}",
                dims.flat_len()
            )));
        }
        Ok(FlatIndex(a))
    }

    pub fn flat(self) -> usize {
        self.0
    }

    pub fn split(self, dims: Dims) -> (usize, usize) {
        (self.0 / dims.t, self.0 % dims.t)
    }
}

/// Row-major dense matrix over any [`Scalar`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, S::one());
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows} x {cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &S {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: S) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &DenseMatrix<S>) -> Self {
        assert_eq!(self.cols, other.rows, "matrix product shape");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.data[idx] = out.data[idx].clone() + a.clone() * other.get(k, j).clone();
                }
            }
        }
        out
    }

    pub fn scaled(&self, c: &S) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.clone() * c.clone()).collect(),
        }
    }

    pub fn kron(&self, other: &DenseMatrix<S>) -> Self {
        Self::from_fn(self.rows * other.rows, self.cols * other.cols, |r, c| {
            self.get(r / other.rows, c / other.cols).clone()
                * other.get(r % other.rows, c % other.cols).clone()
        })
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// ln|det| computed in `f64` (LU with partial pivoting).
    pub fn log_abs_det(&self) -> f64 {
        assert!(self.is_square());
        let n = self.rows;
        let m =
            nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j).to_f64().unwrap_or(f64::NAN));
        let lu = m.lu();
        let u = lu.u();
        (0..n).map(|i| u[(i, i)].abs().ln()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(Scalar::magnitude).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layout<S> {
    Identity,
    /// `O_{(i,t),(p,l)} = cross_{ip} * temporal_{tl}`
    Kronecker {
        cross: DenseMatrix<S>,
        temporal: DenseMatrix<S>,
    },
    Dense(DenseMatrix<S>),
}

/// Rotation tensor `O_{i,t}^{p,l}` on the flattened `(N T) x (N T)` index space.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationTensor<S> {
    dims: Dims,
    layout: Layout<S>,
}

impl<S: Scalar> RotationTensor<S> {
    pub fn identity(dims: Dims) -> Self {
        RotationTensor {
            dims,
            layout: Layout::Identity,
        }
    }

    /// Factorised `O = I (x) Theta` with `cross` N x N and `temporal` T x T.
    pub fn kronecker(cross: DenseMatrix<S>, temporal: DenseMatrix<S>) -> Result<Self> {
        Self::kronecker_with_threshold(cross, temporal, DEFAULT_DET_THRESHOLD)
    }

    pub fn kronecker_with_threshold(
        cross: DenseMatrix<S>,
        temporal: DenseMatrix<S>,
        threshold: f64,
    ) -> Result<Self> {
        if !cross.is_square() || !temporal.is_square() {
            return Err(Error::Dimension("Kronecker factors must be square".into()));
        }
        let dims = Dims::new(cross.rows(), temporal.rows())?;
        let log_det = dims.t as f64 * cross.log_abs_det() + dims.n as f64 * temporal.log_abs_det();
        check_det(log_det, threshold)?;
        Ok(RotationTensor {
            dims,
            layout: Layout::Kronecker { cross, temporal },
        })
    }

    pub fn dense(dims: Dims, matrix: DenseMatrix<S>) -> Result<Self> {
        Self::dense_with_threshold(dims, matrix, DEFAULT_DET_THRESHOLD)
    }

    pub fn dense_with_threshold(
        dims: Dims,
        matrix: DenseMatrix<S>,
        threshold: f64,
    ) -> Result<Self> {
        let nt = dims.flat_len();
        if nt > DENSE_CAPACITY {
            return Err(Error::Capacity {
                what: "dense rotation tensor size N*T",
                requested: nt,
                limit: DENSE_CAPACITY,
            });
        }
        if matrix.rows() != nt || matrix.cols() != nt {
            return Err(Error::Dimension(format!(
                "rotation matrix is {} x {}, expected {nt} x {nt}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        check_det(matrix.log_abs_det(), threshold)?;
        Ok(RotationTensor {
            dims,
            layout: Layout::Dense(matrix),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.layout, Layout::Identity)
    }

    pub fn is_factorized(&self) -> bool {
        !matches!(self.layout, Layout::Dense(_))
    }

    /// `(cross, temporal)` factors when the tensor is factorised.
    pub fn factors(&self) -> Option<(DenseMatrix<S>, DenseMatrix<S>)> {
        match &self.layout {
            Layout::Identity => Some((
                DenseMatrix::identity(self.dims.n),
                DenseMatrix::identity(self.dims.t),
            )),
            Layout::Kronecker { cross, temporal } => Some((cross.clone(), temporal.clone())),
            Layout::Dense(_) => None,
        }
    }

    pub fn entry(&self, a: usize, b: usize) -> S {
        match &self.layout {
            Layout::Identity => {
                if a == b {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Layout::Kronecker { cross, temporal } => {
                let t = self.dims.t;
                cross.get(a / t, b / t).clone() * temporal.get(a % t, b % t).clone()
            }
            Layout::Dense(m) => m.get(a, b).clone(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<S> {
        let nt = self.dims.flat_len();
        DenseMatrix::from_fn(nt, nt, |a, b| self.entry(a, b))
    }

    /// Nonzero entries of column `b`: `(a, O_ab)`.
    pub fn column_support(&self, b: usize) -> Vec<(usize, S)> {
        let nt = self.dims.flat_len();
        match &self.layout {
            Layout::Identity => vec![(b, S::one())],
            Layout::Kronecker { cross, temporal } => {
                let t = self.dims.t;
                let (p, l) = (b / t, b % t);
                let mut out = Vec::new();
                for i in 0..self.dims.n {
                    let ci = cross.get(i, p);
                    if ci.is_zero() {
                        continue;
                    }
                    for tt in 0..t {
                        let bt = temporal.get(tt, l);
                        if !bt.is_zero() {
                            out.push((i * t + tt, ci.clone() * bt.clone()));
                        }
                    }
                }
                out
            }
            Layout::Dense(m) => (0..nt)
                .filter_map(|a| {
                    let v = m.get(a, b);
                    (!v.is_zero()).then(|| (a, v.clone()))
                })
                .collect(),
        }
    }

    /// Mixture-variance-resolved correlation tensor
    /// `C_a^c = sum_b O_ab O_cb u_b` as an `(N T) x (N T)` polynomial matrix.
    pub fn correlation_tensor(&self) -> PolyMatrix<S> {
        let nt = self.dims.flat_len();
        let mut c = PolyMatrix::zeros(nt, nt);
        for b in 0..nt {
            let support = self.column_support(b);
            let var = Monomial::var(b);
            for (a, oab) in &support {
                for (cc, ocb) in &support {
                    c.entry_mut(*a, *cc)
                        .add_term(var, oab.clone() * ocb.clone());
                }
            }
        }
        c
    }

    /// `C_a^c` for a single pair of flat indices.
    pub fn correlation_entry(&self, a: usize, c: usize) -> Poly<S> {
        let nt = self.dims.flat_len();
        let mut out = Poly::zero();
        for b in 0..nt {
            let v = self.entry(a, b) * self.entry(c, b);
            if !v.is_zero() {
                out.add_term(Monomial::var(b), v);
            }
        }
        out
    }

    /// `O O^T`.
    pub fn gram(&self) -> DenseMatrix<S> {
        let d = self.to_dense();
        d.mul(&d.transpose())
    }

    pub fn cast<U: Scalar>(&self, f: impl Fn(&S) -> U) -> RotationTensor<U> {
        let conv = |m: &DenseMatrix<S>| DenseMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(&f).collect(),
        };
        let layout = match &self.layout {
            Layout::Identity => Layout::Identity,
            Layout::Kronecker { cross, temporal } => Layout::Kronecker {
                cross: conv(cross),
                temporal: conv(temporal),
            },
            Layout::Dense(m) => Layout::Dense(conv(m)),
        };
        RotationTensor {
            dims: self.dims,
            layout,
        }
    }
}

fn check_det(log_abs_det: f64, threshold: f64) -> Result<()> {
    if !(log_abs_det > threshold.ln()) {
        return Err(Error::NotInvertible {
            log_abs_det,
            threshold,
        });
    }
    Ok(())
}

impl RotationTensor<f64> {
    /// Seeded dense tensor `O = I + E`, `E_ab ~ U(-scale, scale)`. Invertible
    /// with overwhelming probability for `scale < 1`; rejected otherwise.
    pub fn random_dense(dims: Dims, seed: u64, scale: f64) -> Result<Self> {
        use rand::Rng;
        let nt = dims.flat_len();
        let mut rng = crate::rng::rng_from_seed(seed);
        let m = DenseMatrix::from_fn(nt, nt, |a, b| {
            let e: f64 = rng.random_range(-scale..scale);
            if a == b {
                1.0 + e
            } else {
                e
            }
        });
        Self::dense(dims, m)
    }
}
