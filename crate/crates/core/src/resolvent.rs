//! Planar resolvent of the covariance estimator `c = X X^T / T`.
//!
//! With the mixture variables held fixed the resolvent is a formal series
//! `g(z) = sum_n g^(n) / z^(n+1)` whose coefficients are polynomial matrices
//! in `u_b = sigma_D^2 / xi_b^2`. In the planar limit
//!
//! ```text
//! g     = (z - S)^-1,              S_ij = C_{i,a}^{j,b} R_ab,
//! R     = (T - B)^-1,              B_ab = C_{p,a}^{q,b} g_pq,
//! ```
//!
//! and expanding both in `1/z` gives a triangular recursion: `g^(n)` only
//! needs self-energy coefficients `s^(m)`, `m < n`, which only need `g^(l)`,
//! `l < m`. The average over the mixture variables is taken at the very end.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::distribution::QExpParams;
use crate::error::{Error, Result};
use crate::poly::{Monomial, PatternSum, Poly, PolyMatrix};
use crate::scalar::{Real, Scalar};
use crate::tensor::{DenseMatrix, Dims, RotationTensor};
use crate::wick::MomentWeights;

pub const DEFAULT_ORDER_CAP: usize = 6;
pub const DEFAULT_SIZE_CAP: usize = 4096;
/// Upper bound on stored polynomial terms across all materialised coefficients.
pub const TERM_BUDGET: usize = 60_000_000;

const _: () = assert!(DEFAULT_ORDER_CAP <= crate::poly::MAX_DEGREE);

/// Resolvent coefficients `g^(n)`, `n = 0..=order`, each an `N x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct XiSeries<S: Scalar> {
    pub dims: Dims,
    pub coefficients: Vec<PolyMatrix<S>>,
}

/// Self-energy coefficients `s^(m)` of `S(z) = sum_m s^(m) / z^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfEnergySeries<S: Scalar> {
    pub dims: Dims,
    pub coefficients: Vec<PolyMatrix<S>>,
}

fn check_series_invariants<S: Scalar>(
    coefficients: &[PolyMatrix<S>],
    degree_offset: usize,
) -> Result<()> {
    for (n, g) in coefficients.iter().enumerate() {
        for (i, j, p) in g.entries() {
            if let Some((lo, hi)) = p.trimmed().degree_range() {
                if lo != n + degree_offset || hi != n + degree_offset {
                    return Err(Error::Internal(format!(
                        "order {n} entry ({i}, {j}) has monomial degrees {lo}..={hi}"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn is_symmetric<S: Scalar>(m: &PolyMatrix<S>, rel_tol: f64) -> bool {
    let scale = m
        .entries()
        .map(|(_, _, p)| p.max_abs_coefficient())
        .fold(0.0, f64::max);
    let zero = Poly::zero();
    m.entries().all(|(i, j, p)| {
        let q = m.get(j, i).unwrap_or(&zero);
        p.approx_eq(q, rel_tol * scale)
    })
}

impl<S: Scalar> XiSeries<S> {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficient(&self, n: usize) -> Option<&PolyMatrix<S>> {
        self.coefficients.get(n)
    }

    /// Leading coefficient is the identity and order `n` has degree exactly `n`.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.dims.n;
        if !self.coefficients[0].exact_eq(&PolyMatrix::identity(n)) {
            return Err(Error::Internal(
                "leading resolvent coefficient is not the identity".into(),
            ));
        }
        check_series_invariants(&self.coefficients, 0)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.coefficients.iter().all(|g| is_symmetric(g, rel_tol))
    }
}

impl<S: Scalar> SelfEnergySeries<S> {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Order `m` has degree exactly `m + 1`.
    pub fn check_invariants(&self) -> Result<()> {
        check_series_invariants(&self.coefficients, 1)
    }
}

#[derive(Debug, Clone)]
pub struct PlanarSolution<S: Scalar> {
    pub resolvent: XiSeries<S>,
    pub self_energy: SelfEnergySeries<S>,
}

fn check_capacity(dims: Dims, n_max: usize) -> Result<()> {
    if n_max > DEFAULT_ORDER_CAP {
        return Err(Error::Capacity {
            what: "series order n_max",
            requested: n_max,
            limit: DEFAULT_ORDER_CAP,
        });
    }
    if dims.flat_len() > DEFAULT_SIZE_CAP {
        return Err(Error::Capacity {
            what: "series size N*T",
            requested: dims.flat_len(),
            limit: DEFAULT_SIZE_CAP,
        });
    }
    Ok(())
}

/// Contractions of the correlation tensor with `N x N` and `T x T` matrices.
struct Planar<S: Scalar> {
    dims: Dims,
    c: PolyMatrix<S>,
    terms: usize,
}

impl<S: Scalar> Planar<S> {
    fn new(o: &RotationTensor<S>) -> Self {
        let dims = o.dims();
        let c = o.correlation_tensor();
        let terms = c.total_terms();
        Planar { dims, c, terms }
    }

    fn charge(&mut self, m: &PolyMatrix<S>) -> Result<()> {
        self.terms += m.total_terms();
        if self.terms > TERM_BUDGET {
            return Err(Error::Capacity {
                what: "stored series terms",
                requested: self.terms,
                limit: TERM_BUDGET,
            });
        }
        Ok(())
    }

    /// `s_ij = sum_{ab} C_{i,a}^{j,b} R_ab`.
    fn self_energy(&self, r: &PolyMatrix<S>) -> PolyMatrix<S> {
        let t = self.dims.t;
        let one = S::one();
        let mut s = PolyMatrix::zeros(self.dims.n, self.dims.n);
        for (a, c, cp) in self.c.entries() {
            if let Some(rv) = r.get(a % t, c % t) {
                s.entry_mut(a / t, c / t).add_product(cp, rv, &one);
            }
        }
        s
    }

    /// `B_ab = sum_{pq} C_{p,a}^{q,b} g_pq`.
    fn dashed(&self, g: &PolyMatrix<S>) -> PolyMatrix<S> {
        let t = self.dims.t;
        let one = S::one();
        let mut b = PolyMatrix::zeros(t, t);
        for (a, c, cp) in self.c.entries() {
            if let Some(gv) = g.get(a / t, c / t) {
                b.entry_mut(a % t, c % t).add_product(cp, gv, &one);
            }
        }
        b
    }

    // Every coefficient of order n carries exactly T^-n (T^-(m+1) for s^(m)),
    // so the recursion runs with T = 1 and the powers are applied at the end.
    // Integer tensors then give exact intermediate coefficients.
    fn r0(&self) -> PolyMatrix<S> {
        PolyMatrix::identity(self.dims.t)
    }

    /// `R^(m) = sum_{l<m} B^(l) R^(m-1-l)`, up to `T^-(m+1)`.
    fn next_r(&self, b: &[PolyMatrix<S>], r: &[PolyMatrix<S>]) -> PolyMatrix<S> {
        convolve(b, r, r.len() - 1, self.dims.t)
    }

    fn inv_t_pow(&self, k: usize) -> S {
        let inv = S::one() / S::from_count(self.dims.t);
        (0..k).fold(S::one(), |acc, _| acc * inv.clone())
    }

    fn rescale(&self, coefficients: Vec<PolyMatrix<S>>, offset: usize) -> Vec<PolyMatrix<S>> {
        coefficients
            .into_iter()
            .enumerate()
            .map(|(n, m)| {
                if n + offset == 0 {
                    m
                } else {
                    m.scaled(&self.inv_t_pow(n + offset))
                }
            })
            .collect()
    }
}

/// `sum_{l=0}^{k} a[l] * b[k-l]`.
fn convolve<S: Scalar>(
    a: &[PolyMatrix<S>],
    b: &[PolyMatrix<S>],
    k: usize,
    size: usize,
) -> PolyMatrix<S> {
    let mut acc = PolyMatrix::zeros(size, size);
    for l in 0..=k {
        acc.add_assign(&a[l].mul(&b[k - l]));
    }
    acc
}

/// Truncated planar fixed point, one order finalised per step.
pub fn solve_planar<S: Scalar>(o: &RotationTensor<S>, n_max: usize) -> Result<PlanarSolution<S>> {
    let dims = o.dims();
    check_capacity(dims, n_max)?;
    let mut pl = Planar::new(o);
    let mut g = vec![PolyMatrix::identity(dims.n)];
    let mut s: Vec<PolyMatrix<S>> = Vec::new();
    let mut b: Vec<PolyMatrix<S>> = Vec::new();
    let mut r = vec![pl.r0()];
    for n in 1..=n_max {
        if n >= 2 {
            b.push(pl.dashed(&g[n - 2]));
            let next = pl.next_r(&b, &r);
            pl.charge(&next)?;
            r.push(next);
        }
        let sm = pl.self_energy(&r[n - 1]);
        pl.charge(&sm)?;
        s.push(sm);
        let gn = convolve(&s, &g, n - 1, dims.n);
        pl.charge(&gn)?;
        g.push(gn);
    }
    if n_max > 0 {
        // Complete the self-energy series to the same order for reporting.
        b.push(pl.dashed(&g[n_max - 1]));
        let next = pl.next_r(&b, &r);
        r.push(next);
        s.push(pl.self_energy(&r[n_max]));
    } else {
        s.push(pl.self_energy(&r[0]));
    }
    Ok(PlanarSolution {
        resolvent: XiSeries {
            dims,
            coefficients: pl.rescale(g, 0),
        },
        self_energy: SelfEnergySeries {
            dims,
            coefficients: pl.rescale(s, 1),
        },
    })
}

/// Resolvent series to order `n_max` with the mixture variables fixed.
pub fn solve_resolvent<S: Scalar>(o: &RotationTensor<S>, n_max: usize) -> Result<XiSeries<S>> {
    solve_planar(o, n_max).map(|sol| sol.resolvent)
}

/// The same fixed point by Jacobi sweeps: rebuild the self-energy from the
/// whole current `g`, then `g` from the self-energy, until nothing changes.
/// Returns the series and the number of sweeps.
pub fn solve_resolvent_sweeps<S: Scalar>(
    o: &RotationTensor<S>,
    n_max: usize,
) -> Result<(XiSeries<S>, usize)> {
    let dims = o.dims();
    check_capacity(dims, n_max)?;
    let pl = Planar::new(o);
    let mut g = vec![PolyMatrix::identity(dims.n)];
    g.resize(n_max + 1, PolyMatrix::zeros(dims.n, dims.n));
    let cap = n_max + 2;
    for sweep in 1..=cap {
        let mut b = Vec::with_capacity(n_max);
        let mut r = vec![pl.r0()];
        for l in 0..n_max.saturating_sub(1) {
            b.push(pl.dashed(&g[l]));
            r.push(pl.next_r(&b, &r));
        }
        let s: Vec<_> = r.iter().map(|rm| pl.self_energy(rm)).collect();
        let mut next = vec![PolyMatrix::identity(dims.n)];
        for n in 1..=n_max {
            next.push(convolve(&s, &g, n - 1, dims.n));
        }
        let stable = next.iter().zip(&g).all(|(a, b)| a.exact_eq(b));
        g = next;
        if stable {
            return Ok((
                XiSeries {
                    dims,
                    coefficients: pl.rescale(g, 0),
                },
                sweep,
            ));
        }
    }
    Err(Error::Internal(format!(
        "truncated fixed point not stable after {cap} sweeps"
    )))
}

/// Replace every monomial by its mixture average.
pub fn average_xi<T: Real>(series: &XiSeries<T>, p: &QExpParams<T>) -> Result<Vec<DenseMatrix<T>>> {
    let w = MomentWeights::new(p);
    let n = series.dims.n;
    series
        .coefficients
        .iter()
        .enumerate()
        .map(|(order, g)| {
            let mut out = DenseMatrix::zeros(n, n);
            for (i, j, poly) in g.entries() {
                let v = w.average(poly, series.dims).map_err(|e| {
                    e.with_context(|| format!("order {order}, entry ({}, {})", i + 1, j + 1))
                })?;
                out.set(i, j, v);
            }
            Ok(out)
        })
        .collect()
}

/// Normalised spectral moments `m_0..=m_n` and the ratio `r = N / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMoments<T> {
    #[serde(rename = "r")]
    pub ratio: T,
    #[serde(rename = "moments")]
    pub values: Vec<T>,
}

impl<T: Real> SpectralMoments<T> {
    pub fn order(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, n: usize) -> Option<T> {
        self.values.get(n).copied()
    }

    /// Truncated `t(z) = sum_n m_n / z^(n+1)`, meaningful for real `z`
    /// above the spectral edge.
    pub fn generating_function(&self, z: T) -> Result<T> {
        if z == T::zero() {
            return Err(Error::Pole("t(z) is singular at z = 0"));
        }
        let inv = T::one() / z;
        let mut pw = inv;
        let mut total = T::zero();
        for m in &self.values {
            total = total + *m * pw;
            pw = pw * inv;
        }
        Ok(total)
    }

    /// Every moment is non-negative and `m_0 = 1`.
    pub fn is_admissible(&self) -> bool {
        self.values.first() == Some(&T::one()) && self.values.iter().all(|m| *m >= T::zero())
    }
}

/// `N m_k = E[Tr g^(k)]` before averaging, as pattern sums. Once built the
/// moments can be evaluated for any `(K, sigma)` without repeating the series.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPatterns<S: Scalar> {
    pub dims: Dims,
    pub traces: Vec<PatternSum<S>>,
}

impl<S: Scalar> MomentPatterns<S> {
    /// Uses `Tr g^(k) = sum_{m<k-1} Tr(s^(m) g^(k-1-m)) + sum_ab B^(0)_ab R^(k-1)_ab`,
    /// so the highest order is never materialised and every order is computed
    /// the same way no matter where the series is truncated.
    pub fn build(o: &RotationTensor<S>, n_max: usize) -> Result<Self> {
        let dims = o.dims();
        check_capacity(dims, n_max)?;
        let mut pl = Planar::new(o);
        let mut traces = Vec::with_capacity(n_max + 1);
        let mut zeroth = PatternSum::default();
        zeroth.add(Monomial::ONE.pattern(), S::from_count(dims.n));
        traces.push(zeroth);
        if n_max == 0 {
            return Ok(MomentPatterns { dims, traces });
        }
        let mut g = vec![PolyMatrix::identity(dims.n)];
        let mut s: Vec<PolyMatrix<S>> = Vec::new();
        let mut b = vec![pl.dashed(&g[0])];
        let mut r = vec![pl.r0()];
        for k in 1..=n_max {
            if k >= 2 {
                let next = pl.next_r(&b[..k - 1], &r);
                pl.charge(&next)?;
                r.push(next);
            }
            let mut acc = b[0].entrywise_product_patterns(&r[k - 1]);
            for m in 0..k.saturating_sub(1) {
                acc.merge(&s[m].trace_product_patterns(&g[k - 1 - m]));
            }
            acc.scale(&pl.inv_t_pow(k));
            traces.push(acc);
            if k < n_max {
                let sm = pl.self_energy(&r[k - 1]);
                pl.charge(&sm)?;
                s.push(sm);
                let gk = convolve(&s, &g, k - 1, dims.n);
                pl.charge(&gk)?;
                g.push(gk);
                while b.len() < k {
                    let bl = pl.dashed(&g[b.len()]);
                    pl.charge(&bl)?;
                    b.push(bl);
                }
            }
        }
        Ok(MomentPatterns { dims, traces })
    }

    pub fn order(&self) -> usize {
        self.traces.len() - 1
    }
}

impl<T: Real> MomentPatterns<T> {
    pub fn evaluate(&self, p: &QExpParams<T>) -> Result<SpectralMoments<T>> {
        self.evaluate_with(&MomentWeights::new(p))
    }

    /// Moments of the Gaussian model with the same rotation tensor.
    pub fn evaluate_gaussian(&self, sigma: T) -> Result<SpectralMoments<T>> {
        self.evaluate_with(&MomentWeights::gaussian(sigma))
    }

    pub fn evaluate_with(&self, w: &MomentWeights<T>) -> Result<SpectralMoments<T>> {
        let n = T::from_count(self.dims.n);
        let mut values = Vec::with_capacity(self.traces.len());
        values.push(T::one());
        for (k, tr) in self.traces.iter().enumerate().skip(1) {
            let v = w
                .average_patterns(tr)
                .map_err(|e| e.with_context(|| format!("spectral moment m_{k}")))?;
            values.push(v / n);
        }
        Ok(SpectralMoments {
            ratio: T::lit(self.dims.ratio()),
            values,
        })
    }
}

/// Planar spectral moments `m_0..=m_{n_max}` from the rotation tensor.
pub fn spectral_moments_direct<T: Real>(
    o: &RotationTensor<T>,
    p: &QExpParams<T>,
    n_max: usize,
) -> Result<SpectralMoments<T>> {
    MomentPatterns::build(o, n_max)?.evaluate(p)
}

/// One entry where the recursion and the explicit contraction disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub order: usize,
    pub i: usize,
    pub j: usize,
    pub series: f64,
    pub explicit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarReport {
    pub order: usize,
    /// Largest coefficient-wise difference, relative to the largest coefficient.
    pub polynomial_error: f64,
    /// Largest difference after averaging, relative to the largest entry.
    pub averaged_error: f64,
    pub tolerance: f64,
    pub mismatches: Vec<Mismatch>,
    pub non_planar_note: String,
}

impl PlanarReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
            && self.polynomial_error <= self.tolerance
            && self.averaged_error <= self.tolerance
    }
}

/// The listed low-order resolvent coefficients, by direct index contraction.
pub fn explicit_coefficients<S: Scalar>(
    o: &RotationTensor<S>,
    order: usize,
) -> Result<Vec<PolyMatrix<S>>> {
    if order > 3 {
        return Err(Error::Capacity {
            what: "explicit contraction order",
            requested: order,
            limit: 3,
        });
    }
    let dims = o.dims();
    let (n, t) = (dims.n, dims.t);
    let cm = o.correlation_tensor();
    let zero = Poly::zero();
    let c = |i: usize, a: usize, j: usize, b: usize| cm.get(i * t + a, j * t + b).unwrap_or(&zero);
    let inv_t = S::one() / S::from_count(t);
    let mut out = vec![PolyMatrix::identity(n)];
    if order >= 1 {
        let mut g1 = PolyMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut e = Poly::zero();
                for a in 0..t {
                    e.add_assign(c(i, a, j, a));
                }
                g1.add_to(i, j, &e.scaled(&inv_t));
            }
        }
        out.push(g1);
    }
    if order >= 2 {
        let f = inv_t.clone() * inv_t.clone();
        let mut g2 = PolyMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut e = Poly::zero();
                for a in 0..t {
                    for b in 0..t {
                        for j1 in 0..n {
                            e.add_product(c(i, a, j, b), c(j1, a, j1, b), &S::one());
                        }
                        for k in 0..n {
                            e.add_product(c(i, a, k, a), c(k, b, j, b), &S::one());
                        }
                    }
                }
                g2.add_to(i, j, &e.scaled(&f));
            }
        }
        out.push(g2);
    }
    if order >= 3 {
        let f = inv_t.clone() * inv_t.clone() * inv_t.clone();
        let one = S::one();
        let mut g3 = PolyMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut e = Poly::zero();
                for a in 0..t {
                    for b in 0..t {
                        for d in 0..t {
                            for x in 0..n {
                                for y in 0..n {
                                    // C_{i,1}^{j,2} C_{x,1}^{y,2} C_{x,3}^{y,3}
                                    e.add_assign(
                                        &c(i, a, j, b).mul(c(x, a, y, b)).mul(c(x, d, y, d)),
                                    );
                                    // C_{i,1}^{j,3} C_{x,1}^{x,2} C_{y,2}^{y,3}
                                    e.add_assign(
                                        &c(i, a, j, d).mul(c(x, a, x, b)).mul(c(y, b, y, d)),
                                    );
                                }
                            }
                        }
                        for k in 0..n {
                            for x in 0..n {
                                for d in 0..t {
                                    // C_{i,1}^{k,1} C_{k,3}^{j,4} C_{x,3}^{x,4}
                                    e.add_assign(
                                        &c(i, a, k, a).mul(c(k, b, j, d)).mul(c(x, b, x, d)),
                                    );
                                    // C_{i,3}^{k,4} C_{k,1}^{j,1} C_{x,3}^{x,4}
                                    e.add_assign(
                                        &c(i, b, k, d).mul(c(k, a, j, a)).mul(c(x, b, x, d)),
                                    );
                                }
                            }
                            for k2 in 0..n {
                                for d in 0..t {
                                    // C_{i,1}^{k1,1} C_{k1,2}^{k2,2} C_{k2,3}^{j,3}
                                    let mut q = c(i, a, k, a).mul(c(k, b, k2, b));
                                    q = q.mul(c(k2, d, j, d));
                                    e.add_product(&q, &Poly::constant(one.clone()), &one);
                                }
                            }
                        }
                    }
                }
                g3.add_to(i, j, &e.scaled(&f));
            }
        }
        out.push(g3);
    }
    Ok(out)
}

/// Compare the recursion against the explicit contraction formulas up to
/// `order` (2 or 3), polynomially and after averaging.
pub fn check_planar_consistency<T: Real>(
    o: &RotationTensor<T>,
    p: &QExpParams<T>,
    order: usize,
) -> Result<PlanarReport> {
    if !(2..=3).contains(&order) {
        return Err(Error::InvalidParameter {
            name: "order",
            value: order as f64,
            reason: "consistency check covers orders 2 and 3",
        });
    }
    let tolerance = 1e-12;
    let series = solve_resolvent(o, order)?;
    let explicit = XiSeries {
        dims: o.dims(),
        coefficients: explicit_coefficients(o, order)?,
    };
    let mut polynomial_error = 0.0f64;
    for (a, b) in series.coefficients.iter().zip(&explicit.coefficients) {
        let scale = b
            .entries()
            .map(|(_, _, p)| p.max_abs_coefficient())
            .fold(f64::MIN_POSITIVE, f64::max);
        let zero = Poly::zero();
        let keys: std::collections::BTreeSet<(usize, usize)> = a
            .entries()
            .chain(b.entries())
            .map(|(i, j, _)| (i, j))
            .collect();
        for (i, j) in keys {
            let pa = a.get(i, j).unwrap_or(&zero);
            let pb = b.get(i, j).unwrap_or(&zero);
            let mut diff = pa.clone();
            diff.add_assign(&pb.scaled(&-T::one()));
            polynomial_error = polynomial_error.max(diff.max_abs_coefficient() / scale);
        }
    }
    let avg_series = average_xi(&series, p)?;
    let avg_explicit = average_xi(&explicit, p)?;
    let mut averaged_error = 0.0f64;
    let mut mismatches = Vec::new();
    for (k, (a, b)) in avg_series.iter().zip(&avg_explicit).enumerate() {
        let scale = b.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                let (x, y) = (
                    a.get(i, j).to_f64().unwrap_or(f64::NAN),
                    b.get(i, j).to_f64().unwrap_or(f64::NAN),
                );
                let rel = (x - y).abs() / scale;
                averaged_error = averaged_error.max(rel);
                if !(rel <= tolerance) {
                    mismatches.push(Mismatch {
                        order: k,
                        i: i + 1,
                        j: j + 1,
                        series: x,
                        explicit: y,
                    });
                }
            }
        }
    }
    Ok(PlanarReport {
        order,
        polynomial_error,
        averaged_error,
        tolerance,
        mismatches,
        non_planar_note: format!(
            "planar diagrams only: crossing pairings are dropped and contribute \
             relative corrections of order 1/N = {:.3e} to the spectral moments",
            1.0 / o.dims().n as f64
        ),
    })
}

/// Checks `(-1)^n G^(n)(z) / n! = G(z)^(n+1)` for `G(z) = 1/z`, with the
/// derivative taken from the power rule and the right side by repeated products.
pub fn resolvent_identity_check(z: Complex64, n: u32) -> Result<bool> {
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::Pole("G(z) = 1/z has a pole at z = 0"));
    }
    if n > 12 {
        return Err(Error::Capacity {
            what: "derivative order",
            requested: n as usize,
            limit: 12,
        });
    }
    // d^n/dz^n z^(-1) = (-1)(-2)...(-n) z^(-1-n)
    let mut fall = 1.0f64;
    for k in 1..=n {
        fall *= -(k as f64);
    }
    let power = (-(n as f64 + 1.0) * z.ln()).exp();
    let derivative = power * fall;
    let mut factorial = 1.0f64;
    for k in 1..=n {
        factorial *= k as f64;
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let left = derivative * (sign / factorial);
    let g = z.inv();
    let mut right = g;
    for _ in 0..n {
        right *= g;
    }
    let rel = (left - right).norm() / right.norm();
    Ok(rel <= 1e-10)
}

/// Marchenko-Pastur support edges `sigma^2 (1 -+ sqrt r)^2`.
pub fn marchenko_pastur_edges(ratio: f64, sigma2: f64) -> (f64, f64) {
    let s = ratio.sqrt();
    (sigma2 * (1.0 - s).powi(2), sigma2 * (1.0 + s).powi(2))
}

/// Marchenko-Pastur density of the non-zero part of the spectrum, `r <= 1`.
pub fn marchenko_pastur_density(x: f64, ratio: f64, sigma2: f64) -> f64 {
    let (lo, hi) = marchenko_pastur_edges(ratio, sigma2);
    if x <= lo || x >= hi {
        return 0.0;
    }
    ((hi - x) * (x - lo)).sqrt() / (2.0 * PI * sigma2 * ratio * x)
}
