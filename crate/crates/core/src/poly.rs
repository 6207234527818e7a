//! Sparse multivariate polynomials in the mixture variances
//! `u_b = sigma_D^2 / xi_b^2`, one variable per flattened mixture index `b`.
//!
//! A [`Monomial`] is a sorted multiset of at most [`MAX_DEGREE`] variable
//! indices packed into a `u128` (16 bits per factor), so hashing and products
//! are cheap. Term order inside a [`Poly`] is insertion order, which keeps
//! every floating-point reduction deterministic.

use std::fmt;
use std::hash::BuildHasherDefault;

use indexmap::IndexMap;
use rustc_hash::FxHasher;

use crate::scalar::Scalar;

pub const MAX_DEGREE: usize = 8;
pub const MAX_VARIABLES: usize = u16::MAX as usize - 1;

type FxBuild = BuildHasherDefault<FxHasher>;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Monomial(u128);

impl Monomial {
    pub const ONE: Monomial = Monomial(0);

    pub fn var(index: usize) -> Self {
        assert!(index < MAX_VARIABLES, "variable index {index} out of range");
        Monomial(index as u128 + 1)
    }

    fn slots(self) -> ([u16; MAX_DEGREE], usize) {
        let mut out = [0u16; MAX_DEGREE];
        let mut n = 0;
        let mut bits = self.0;
        while bits != 0 {
            out[n] = (bits & 0xffff) as u16;
            bits >>= 16;
            n += 1;
        }
        (out, n)
    }

    fn pack(slots: &[u16]) -> Self {
        let mut bits = 0u128;
        for (j, &s) in slots.iter().enumerate() {
            bits |= (s as u128) << (16 * j);
        }
        Monomial(bits)
    }

    pub fn degree(self) -> usize {
        if self.0 == 0 {
            0
        } else {
            (128 - self.0.leading_zeros() as usize).div_ceil(16)
        }
    }

    fn merged(self, other: Monomial) -> ([u16; MAX_DEGREE], usize) {
        let (a, na) = self.slots();
        let (b, nb) = other.slots();
        assert!(
            na + nb <= MAX_DEGREE,
            "monomial degree {} exceeds {MAX_DEGREE}",
            na + nb
        );
        let mut out = [0u16; MAX_DEGREE];
        let (mut i, mut j) = (0, 0);
        for slot in out.iter_mut().take(na + nb) {
            if j >= nb || (i < na && a[i] <= b[j]) {
                *slot = a[i];
                i += 1;
            } else {
                *slot = b[j];
                j += 1;
            }
        }
        (out, na + nb)
    }

    pub fn mul(self, other: Monomial) -> Monomial {
        if self.0 == 0 {
            return other;
        }
        if other.0 == 0 {
            return self;
        }
        let (m, n) = self.merged(other);
        Monomial::pack(&m[..n])
    }

    /// `(variable index, power)` pairs in increasing index order.
    pub fn powers(self) -> impl Iterator<Item = (usize, u32)> {
        let (s, n) = self.slots();
        let mut out: Vec<(usize, u32)> = Vec::with_capacity(n);
        for &v in &s[..n] {
            match out.last_mut() {
                Some((idx, p)) if *idx == v as usize - 1 => *p += 1,
                _ => out.push((v as usize - 1, 1)),
            }
        }
        out.into_iter()
    }

    pub fn pattern(self) -> MultiplicityPattern {
        let (s, n) = self.slots();
        MultiplicityPattern::from_sorted_slots(&s[..n])
    }

    /// Pattern of `self * other` without building the product.
    pub fn product_pattern(self, other: Monomial) -> MultiplicityPattern {
        let (m, n) = self.merged(other);
        MultiplicityPattern::from_sorted_slots(&m[..n])
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .powers()
            .map(|(i, p)| {
                if p == 1 {
                    format!("u{i}")
                } else {
                    format!("u{i}^{p}")
                }
            })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

/// Multiset of multiplicities `nu` of a monomial, sorted decreasingly: an
/// integer partition of its degree. The xi-average of a monomial depends on
/// nothing else.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MultiplicityPattern(u32);

impl MultiplicityPattern {
    fn from_sorted_slots(slots: &[u16]) -> Self {
        let mut parts = [0u8; MAX_DEGREE];
        let mut n = 0;
        let mut i = 0;
        while i < slots.len() {
            let mut j = i + 1;
            while j < slots.len() && slots[j] == slots[i] {
                j += 1;
            }
            parts[n] = (j - i) as u8;
            n += 1;
            i = j;
        }
        parts[..n].sort_unstable_by(|a, b| b.cmp(a));
        Self::from_parts(&parts[..n])
    }

    pub fn from_parts(parts: &[u8]) -> Self {
        let mut sorted: Vec<u8> = parts.iter().copied().filter(|&p| p > 0).collect();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let mut bits = 0u32;
        for (j, &p) in sorted.iter().enumerate() {
            assert!(p <= 15 && j < MAX_DEGREE);
            bits |= (p as u32) << (4 * j);
        }
        MultiplicityPattern(bits)
    }

    pub fn parts(self) -> impl Iterator<Item = u32> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let p = bits & 0xf;
                bits >>= 4;
                Some(p)
            }
        })
    }

    pub fn degree(self) -> u32 {
        self.parts().sum()
    }

    pub fn max_part(self) -> u32 {
        self.parts().next().unwrap_or(0)
    }
}

impl fmt::Debug for MultiplicityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.parts().map(|p| p.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Coefficients grouped by multiplicity pattern; the form in which a
/// polynomial is averaged over the mixture variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSum<S> {
    terms: Vec<(MultiplicityPattern, S)>,
}

impl<S: Scalar> Default for PatternSum<S> {
    fn default() -> Self {
        PatternSum { terms: Vec::new() }
    }
}

impl<S: Scalar> PatternSum<S> {
    pub fn add(&mut self, pattern: MultiplicityPattern, c: S) {
        match self.terms.iter_mut().find(|(p, _)| *p == pattern) {
            Some((_, acc)) => *acc = acc.clone() + c,
            None => self.terms.push((pattern, c)),
        }
    }

    pub fn merge(&mut self, other: &PatternSum<S>) {
        for (p, c) in &other.terms {
            self.add(*p, c.clone());
        }
    }

    pub fn scale(&mut self, c: &S) {
        for (_, v) in &mut self.terms {
            *v = v.clone() * c.clone();
        }
    }

    pub fn terms(&self) -> &[(MultiplicityPattern, S)] {
        &self.terms
    }

    /// Terms sorted by pattern, for comparisons independent of insertion order.
    pub fn sorted(&self) -> Vec<(MultiplicityPattern, S)> {
        let mut t = self.terms.clone();
        t.sort_by_key(|(p, _)| *p);
        t
    }
}

#[derive(Clone, PartialEq)]
pub struct Poly<S> {
    terms: IndexMap<Monomial, S, FxBuild>,
}

impl<S: Scalar> Default for Poly<S> {
    fn default() -> Self {
        Poly {
            terms: IndexMap::default(),
        }
    }
}

impl<S: Scalar> fmt::Debug for Poly<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.terms.iter()).finish()
    }
}

impl<S: Scalar> Poly<S> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: S) -> Self {
        let mut p = Self::zero();
        p.add_term(Monomial::ONE, c);
        p
    }

    pub fn term(m: Monomial, c: S) -> Self {
        let mut p = Self::zero();
        p.add_term(m, c);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &S)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, m: &Monomial) -> Option<&S> {
        self.terms.get(m)
    }

    pub fn add_term(&mut self, m: Monomial, c: S) {
        match self.terms.get_mut(&m) {
            Some(v) => *v = v.clone() + c,
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn add_assign(&mut self, other: &Poly<S>) {
        for (m, c) in &other.terms {
            self.add_term(*m, c.clone());
        }
    }

    /// `self += factor * a * b`.
    pub fn add_product(&mut self, a: &Poly<S>, b: &Poly<S>, factor: &S) {
        for (ma, ca) in &a.terms {
            let cab = ca.clone() * factor.clone();
            for (mb, cb) in &b.terms {
                self.add_term(ma.mul(*mb), cab.clone() * cb.clone());
            }
        }
    }

    pub fn mul(&self, other: &Poly<S>) -> Poly<S> {
        let mut out = Poly::zero();
        out.add_product(self, other, &S::one());
        out
    }

    pub fn scaled(&self, c: &S) -> Poly<S> {
        Poly {
            terms: self
                .terms
                .iter()
                .map(|(m, v)| (*m, v.clone() * c.clone()))
                .collect(),
        }
    }

    /// Drop exactly-zero coefficients.
    pub fn trimmed(&self) -> Poly<S> {
        Poly {
            terms: self
                .terms
                .iter()
                .filter(|(_, v)| !v.is_zero())
                .map(|(m, v)| (*m, v.clone()))
                .collect(),
        }
    }

    /// `(min, max)` total degree, `None` for the zero polynomial.
    pub fn degree_range(&self) -> Option<(usize, usize)> {
        let mut it = self.terms.keys().map(|m| m.degree());
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d))))
    }

    pub fn pattern_sum(&self) -> PatternSum<S> {
        let mut out = PatternSum::default();
        for (m, c) in &self.terms {
            out.add(m.pattern(), c.clone());
        }
        out
    }

    /// Accumulate the patterns of `self * other` into `acc`, term by term.
    pub fn accumulate_product_patterns(&self, other: &Poly<S>, acc: &mut PatternSum<S>) {
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                acc.add(ma.product_pattern(*mb), ca.clone() * cb.clone());
            }
        }
    }

    /// Same monomials with coefficients equal up to `tol` in absolute value.
    pub fn approx_eq(&self, other: &Poly<S>, tol: f64) -> bool {
        let diff = |a: Option<&S>, b: Option<&S>| {
            let a = a.map(|v: &S| v.to_f64().unwrap_or(f64::NAN)).unwrap_or(0.0);
            let b = b.map(|v: &S| v.to_f64().unwrap_or(f64::NAN)).unwrap_or(0.0);
            (a - b).abs()
        };
        self.terms
            .iter()
            .all(|(m, c)| diff(Some(c), other.terms.get(m)) <= tol)
            && other
                .terms
                .iter()
                .all(|(m, c)| diff(self.terms.get(m), Some(c)) <= tol)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.magnitude())
            .fold(0.0, f64::max)
    }

    /// Evaluate at given variable values.
    pub fn eval(&self, u: &[S]) -> S {
        let mut total = S::zero();
        for (m, c) in &self.terms {
            let mut v = c.clone();
            for (idx, pw) in m.powers() {
                for _ in 0..pw {
                    v = v * u[idx].clone();
                }
            }
            total = total + v;
        }
        total
    }
}

/// Semantic equality ignoring term order and exact zeros.
pub fn poly_eq_exact<S: Scalar>(a: &Poly<S>, b: &Poly<S>) -> bool {
    let a = a.trimmed();
    let b = b.trimmed();
    a.len() == b.len() && a.terms().all(|(m, c)| b.coefficient(m) == Some(c))
}

/// Sparse matrix of polynomials, entries keyed by `(row, col)` in row-major order.
#[derive(Clone, PartialEq)]
pub struct PolyMatrix<S> {
    rows: usize,
    cols: usize,
    entries: std::collections::BTreeMap<(u32, u32), Poly<S>>,
}

impl<S: Scalar> fmt::Debug for PolyMatrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolyMatrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("entries", &self.entries)
            .finish()
    }
}

impl<S: Scalar> PolyMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            entries: Default::default(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, S::one())
    }

    pub fn scaled_identity(n: usize, c: S) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.add_to(i, i, &Poly::constant(c.clone()));
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Poly<S>> {
        self.entries.get(&(i as u32, j as u32))
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Poly<S> {
        debug_assert!(i < self.rows && j < self.cols);
        self.entries.entry((i as u32, j as u32)).or_default()
    }

    pub fn add_to(&mut self, i: usize, j: usize, p: &Poly<S>) {
        if !p.is_zero() {
            self.entry_mut(i, j).add_assign(p);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &Poly<S>)> {
        self.entries
            .iter()
            .map(|(&(i, j), p)| (i as usize, j as usize, p))
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &Poly<S>)> {
        let i = i as u32;
        self.entries
            .range((i, 0)..(i + 1, 0))
            .map(|(&(_, j), p)| (j as usize, p))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total_terms(&self) -> usize {
        self.entries.values().map(Poly::len).sum()
    }

    pub fn mul(&self, other: &PolyMatrix<S>) -> PolyMatrix<S> {
        assert_eq!(self.cols, other.rows, "matrix product shape");
        let mut out = PolyMatrix::zeros(self.rows, other.cols);
        let one = S::one();
        for (i, k, a) in self.entries() {
            for (j, b) in other.row(k) {
                out.entry_mut(i, j).add_product(a, b, &one);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &PolyMatrix<S>) {
        for (i, j, p) in other.entries() {
            self.add_to(i, j, p);
        }
    }

    pub fn scaled(&self, c: &S) -> PolyMatrix<S> {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .map(|(k, p)| (*k, p.scaled(c)))
                .collect(),
        }
    }

    pub fn transpose(&self) -> PolyMatrix<S> {
        PolyMatrix {
            rows: self.cols,
            cols: self.rows,
            entries: self
                .entries
                .iter()
                .map(|(&(i, j), p)| ((j, i), p.clone()))
                .collect(),
        }
    }

    pub fn trace(&self) -> Poly<S> {
        let mut out = Poly::zero();
        for (i, j, p) in self.entries() {
            if i == j {
                out.add_assign(p);
            }
        }
        out
    }

    /// Pattern sum of `sum_ij E[self_ij * other_ij]` (entrywise pairing).
    pub fn entrywise_product_patterns(&self, other: &PolyMatrix<S>) -> PatternSum<S> {
        let mut acc = PatternSum::default();
        for (i, j, a) in self.entries() {
            if let Some(b) = other.get(i, j) {
                a.accumulate_product_patterns(b, &mut acc);
            }
        }
        acc
    }

    /// Pattern sum of `Tr(self * other)` without forming the product.
    pub fn trace_product_patterns(&self, other: &PolyMatrix<S>) -> PatternSum<S> {
        let mut acc = PatternSum::default();
        for (i, j, a) in self.entries() {
            if let Some(b) = other.get(j, i) {
                a.accumulate_product_patterns(b, &mut acc);
            }
        }
        acc
    }

    /// Entry-wise semantic equality ignoring zeros.
    pub fn exact_eq(&self, other: &PolyMatrix<S>) -> bool {
        if self.rows != other.rows || self.cols != other.cols {
            return false;
        }
        let zero = Poly::zero();
        let keys: std::collections::BTreeSet<_> =
            self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter().all(|k| {
            poly_eq_exact(
                self.entries.get(k).unwrap_or(&zero),
                other.entries.get(k).unwrap_or(&zero),
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn mono(vars: &[usize]) -> Monomial {
        vars.iter()
            .fold(Monomial::ONE, |m, &v| m.mul(Monomial::var(v)))
    }

    #[test]
    fn monomial_basics() {
        let m = mono(&[3, 1, 3, 7]);
        assert_eq!(m.degree(), 4);
        assert_eq!(m.powers().collect::<Vec<_>>(), vec![(1, 1), (3, 2), (7, 1)]);
        assert_eq!(m.pattern().parts().collect::<Vec<_>>(), vec![2, 1, 1]);
        assert_eq!(Monomial::ONE.degree(), 0);
        assert_eq!(format!("{m:?}"), "u1*u3^2*u7");
        assert_eq!(
            mono(&[4]).product_pattern(mono(&[4, 4])),
            MultiplicityPattern::from_parts(&[3])
        );
    }

    #[test]
    #[should_panic(expected = "exceeds")]
    fn degree_overflow_panics() {
        let m = mono(&[0, 1, 2, 3, 4]);
        let _ = m.mul(mono(&[5, 6, 7, 8]));
    }

    #[test]
    fn polynomial_product() {
        // (u0 + 2 u1)^2 = u0^2 + 4 u0 u1 + 4 u1^2
        let mut p = Poly::<BigRational>::zero();
        p.add_term(Monomial::var(0), BigRational::from_integer(1.into()));
        p.add_term(Monomial::var(1), BigRational::from_integer(2.into()));
        let sq = p.mul(&p);
        assert_eq!(sq.len(), 3);
        assert_eq!(
            sq.coefficient(&mono(&[0, 1])),
            Some(&BigRational::from_integer(4.into()))
        );
        let ps = sq.pattern_sum().sorted();
        assert_eq!(ps.len(), 2);
    }

    #[test]
    fn matrix_trace_product_patterns_match_product() {
        let mut a = PolyMatrix::<f64>::zeros(2, 2);
        a.add_to(0, 0, &Poly::term(Monomial::var(0), 1.0));
        a.add_to(0, 1, &Poly::term(Monomial::var(1), 2.0));
        a.add_to(1, 0, &Poly::term(Monomial::var(1), 2.0));
        a.add_to(1, 1, &Poly::term(Monomial::var(2), -1.0));
        let direct = a.mul(&a).trace().pattern_sum().sorted();
        let fused = a.trace_product_patterns(&a).sorted();
        assert_eq!(direct, fused);
    }

    proptest! {
        #[test]
        fn monomial_product_commutes_and_associates(
            a in proptest::collection::vec(0usize..50, 0..3),
            b in proptest::collection::vec(0usize..50, 0..3),
            c in proptest::collection::vec(0usize..50, 0..2),
        ) {
            let (ma, mb, mc) = (mono(&a), mono(&b), mono(&c));
            prop_assert_eq!(ma.mul(mb), mb.mul(ma));
            prop_assert_eq!(ma.mul(mb).mul(mc), ma.mul(mb.mul(mc)));
            prop_assert_eq!(ma.mul(mb).degree(), a.len() + b.len());
            prop_assert_eq!(ma.product_pattern(mb), ma.mul(mb).pattern());
            prop_assert_eq!(ma.pattern().degree() as usize, a.len());
        }
    }
}
