//! Wick theorem for correlated q-Exponentials.
//!
//! Conditionally on the mixture variables `xi`, `X = O Y` is Gaussian with
//! covariance `C(xi) = O diag(u) O^T`, `u_b = sigma_D^2 / xi_b^2`. A `2k`-point
//! moment is therefore the Gaussian pairing sum of products of `C` entries,
//! a polynomial in `u`, averaged over `xi` analytically:
//! `<prod_b u_b^{nu_b}> = prod_b sigma_D^{2 nu_b} f(D, nu_b)`.

use crate::distribution::QExpParams;
use crate::error::{Error, Result};
use crate::partition::{walk_pairings, DEFAULT_PAIRING_CAP};
use crate::poly::{Monomial, MultiplicityPattern, PatternSum, Poly, MAX_DEGREE};
use crate::scalar::{Real, Scalar};
use crate::special::xi_average_factor;
use crate::tensor::{DenseMatrix, Dims, FlatIndex, RotationTensor};

pub use crate::special::xi_average_factor as f_factor;

/// A single term `coefficient * prod_b u_b^{nu_b}` of a moment polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMonomial<S> {
    pub coefficient: S,
    pub monomial: Monomial,
}

impl<S: Scalar> CorrelationMonomial<S> {
    /// `(mixture index, nu)` pairs; never contains a zero power.
    pub fn powers(&self) -> Vec<(usize, u32)> {
        self.monomial.powers().collect()
    }

    pub fn total_degree(&self) -> usize {
        self.monomial.degree()
    }
}

/// Per-multiplicity averages `mu_nu = sigma_D^{2 nu} f(D, nu)`; `None` where
/// the average diverges (`D <= 2 nu`).
#[derive(Debug, Clone)]
pub struct MomentWeights<T> {
    d: T,
    mu: Vec<Option<T>>,
}

impl<T: Real> MomentWeights<T> {
    pub fn new(p: &QExpParams<T>) -> Self {
        let d = p.d();
        let s2 = p.sigma() * p.sigma();
        // sigma_D^2 (D+1) = sigma^2 (D-2), so the product is formed as
        // sigma^{2 nu} prod_j (D-2)/(D-2j), which keeps mu_1 = sigma^2 exact.
        let mu = (0..=MAX_DEGREE as u32)
            .map(|nu| {
                xi_average_factor(d, nu).ok().map(|_| {
                    let mut v = s2.powi(nu as i32);
                    for j in 2..=nu {
                        v = v * (d - T::lit(2.0)) / (d - T::lit(2.0 * j as f64));
                    }
                    v
                })
            })
            .collect();
        MomentWeights { d, mu }
    }

    /// `D -> infinity`: `mu_nu = sigma^(2 nu)`, the Gaussian pairing weights.
    pub fn gaussian(sigma: T) -> Self {
        let s2 = sigma * sigma;
        MomentWeights {
            d: T::infinity(),
            mu: (0..=MAX_DEGREE as i32)
                .map(|nu| Some(s2.powi(nu)))
                .collect(),
        }
    }

    pub fn mu(&self, nu: u32) -> Result<T> {
        self.mu
            .get(nu as usize)
            .copied()
            .flatten()
            .ok_or_else(|| Error::divergence(nu, self.d.to_f64().unwrap_or(f64::NAN)))
    }

    pub fn monomial(&self, m: Monomial) -> Result<T> {
        let mut v = T::one();
        for (_, nu) in m.powers() {
            v = v * self.mu(nu)?;
        }
        Ok(v)
    }

    pub fn pattern(&self, p: MultiplicityPattern) -> Result<T> {
        let mut v = T::one();
        for nu in p.parts() {
            v = v * self.mu(nu)?;
        }
        Ok(v)
    }

    /// `<poly>` over xi; names the offending mixture index on divergence.
    pub fn average(&self, poly: &Poly<T>, dims: Dims) -> Result<T> {
        let mut total = T::zero();
        for (m, c) in poly.terms() {
            let v = self.monomial(*m).map_err(|e| {
                e.with_context(|| {
                    let worst = m
                        .powers()
                        .max_by_key(|&(_, nu)| nu)
                        .map(|(b, _)| b)
                        .unwrap_or(0);
                    let (p, l) = (worst / dims.t, worst % dims.t);
                    format!(
                        "mixture index (p, lambda) = ({}, {}) in {m:?}",
                        p + 1,
                        l + 1
                    )
                })
            })?;
            total = total + *c * v;
        }
        Ok(total)
    }

    pub fn average_patterns(&self, sum: &PatternSum<T>) -> Result<T> {
        let mut total = T::zero();
        for (p, c) in sum.terms() {
            total = total + *c * self.pattern(*p)?;
        }
        Ok(total)
    }
}

/// Moment polynomial of a slot list with the number of pairings summed.
#[derive(Debug, Clone)]
pub struct WickExpansion<S: Scalar> {
    pub polynomial: Poly<S>,
    pub pairings: u64,
}

impl<S: Scalar> WickExpansion<S> {
    pub fn monomials(&self) -> impl Iterator<Item = CorrelationMonomial<S>> + '_ {
        self.polynomial.terms().map(|(m, c)| CorrelationMonomial {
            coefficient: c.clone(),
            monomial: *m,
        })
    }
}

/// Odd-order moments of the symmetric distribution vanish identically.
pub fn odd_moment_vanishes(slot_count: usize) -> bool {
    slot_count % 2 == 1
}

fn check_slots(dims: Dims, slots: &[FlatIndex]) -> Result<()> {
    if odd_moment_vanishes(slots.len()) {
        return Err(Error::OddMoment(slots.len()));
    }
    let k = slots.len() / 2;
    if k == 0 || k > DEFAULT_PAIRING_CAP {
        return Err(Error::Capacity {
            what: "pairing order k",
            requested: k,
            limit: DEFAULT_PAIRING_CAP,
        });
    }
    if let Some(bad) = slots.iter().find(|s| s.flat() >= dims.flat_len()) {
        return Err(Error::Dimension(format!(
            "slot {} outside 0..{}",
            bad.flat(),
            dims.flat_len()
        )));
    }
    Ok(())
}

/// Sum over pair partitions of products of `C` entries, grouped into monomials.
pub fn moment_polynomial<S: Scalar>(
    o: &RotationTensor<S>,
    slots: &[FlatIndex],
) -> Result<WickExpansion<S>> {
    check_slots(o.dims(), slots)?;
    let n = slots.len();
    let mut forms: Vec<Vec<Poly<S>>> = vec![vec![Poly::zero(); n]; n];
    for a in 0..n {
        for c in a + 1..n {
            forms[a][c] = o.correlation_entry(slots[a].flat(), slots[c].flat());
        }
    }
    let mut total = Poly::zero();
    let mut pairings = 0u64;
    walk_pairings(
        n,
        Poly::constant(S::one()),
        |acc: &Poly<S>, a, c| {
            let form = &forms[a][c];
            if acc.is_zero() || form.is_zero() {
                Poly::zero()
            } else {
                acc.mul(form)
            }
        },
        |leaf| {
            pairings += 1;
            total.add_assign(&leaf);
        },
    );
    Ok(WickExpansion {
        polynomial: total.trimmed(),
        pairings,
    })
}

/// `<X_{slot_1} ... X_{slot_2k}>` with the xi-average done analytically.
/// Existence is checked per monomial, so structured `O` may have finite
/// higher moments than the worst case `D > 2k` suggests.
pub fn correlation_tensor_moment<T: Real>(
    o: &RotationTensor<T>,
    p: &QExpParams<T>,
    slots: &[FlatIndex],
) -> Result<T> {
    let expansion = moment_polynomial(o, slots)?;
    MomentWeights::new(p).average(&expansion.polynomial, o.dims())
}

/// `<X X^T> = sigma_D^2 f(D, 1) O O^T = sigma^2 O O^T`.
pub fn two_point<T: Real>(o: &RotationTensor<T>, p: &QExpParams<T>) -> Result<DenseMatrix<T>> {
    let scale = MomentWeights::new(p).mu(1)?;
    Ok(o.gram().scaled(&scale))
}
