//! Perfect matchings (pair partitions) of `2k` slots.
//!
//! Canonical order: the smallest unpaired slot is matched first, partners in
//! increasing order. The `index`-th partition in that order is decoded
//! directly, so the sum over partitions can be split into independent chunks.

use crate::error::{Error, Result};
use crate::special::double_factorial_odd;

pub const DEFAULT_PAIRING_CAP: usize = 8;

/// A perfect matching of `0..2k`; pairs are `(a, b)` with `a < b`, sorted by `a`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairPartition {
    pairs: Vec<(usize, usize)>,
}

impl PairPartition {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn order(&self) -> usize {
        self.pairs.len()
    }

    /// Every slot of `0..2k` appears exactly once.
    pub fn is_valid(&self) -> bool {
        let n = 2 * self.pairs.len();
        let mut seen = vec![false; n];
        for &(a, b) in &self.pairs {
            if a >= b || b >= n || seen[a] || seen[b] {
                return false;
            }
            seen[a] = true;
            seen[b] = true;
        }
        true
    }

    /// Decode partition number `index` (canonical order) of `2k` slots.
    pub fn nth(k: usize, mut index: u64) -> Option<Self> {
        if index >= double_factorial_odd(k) {
            return None;
        }
        let mut free: Vec<usize> = (0..2 * k).collect();
        let mut pairs = Vec::with_capacity(k);
        // mixed radix: the first digit (2k-1 choices) is the most significant
        let mut radices: Vec<u64> = (1..=k as u64).rev().map(|j| 2 * j - 1).collect();
        let mut weights = vec![1u64; k];
        for j in (0..k.saturating_sub(1)).rev() {
            weights[j] = weights[j + 1] * radices[j + 1];
        }
        for (digit_pos, radix) in radices.drain(..).enumerate() {
            let digit = (index / weights[digit_pos]) as usize;
            index %= weights[digit_pos];
            debug_assert!((digit as u64) < radix);
            let first = free.remove(0);
            let partner = free.remove(digit);
            pairs.push((first, partner));
        }
        Some(PairPartition { pairs })
    }
}

/// Number of pair partitions of `2k` slots, `(2k-1)!!`.
pub fn pair_partition_count(k: usize) -> u64 {
    double_factorial_odd(k)
}

pub fn enumerate_pair_partitions(k: usize) -> Result<Vec<PairPartition>> {
    enumerate_pair_partitions_capped(k, DEFAULT_PAIRING_CAP)
}

pub fn enumerate_pair_partitions_capped(k: usize, cap: usize) -> Result<Vec<PairPartition>> {
    if k == 0 {
        return Err(Error::Capacity {
            what: "pairing order k (must be >= 1)",
            requested: 0,
            limit: cap,
        });
    }
    if k > cap {
        return Err(Error::Capacity {
            what: "pairing order k",
            requested: k,
            limit: cap,
        });
    }
    let mut out = Vec::with_capacity(pair_partition_count(k) as usize);
    let mut free: Vec<usize> = (0..2 * k).collect();
    let mut current = Vec::with_capacity(k);
    recurse(&mut free, &mut current, &mut out);
    Ok(out)
}

fn recurse(free: &mut Vec<usize>, current: &mut Vec<(usize, usize)>, out: &mut Vec<PairPartition>) {
    if free.is_empty() {
        out.push(PairPartition {
            pairs: current.clone(),
        });
        return;
    }
    let first = free.remove(0);
    for idx in 0..free.len() {
        let partner = free.remove(idx);
        current.push((first, partner));
        recurse(free, current, out);
        current.pop();
        free.insert(idx, partner);
    }
    free.insert(0, first);
}

/// Depth-first walk over all pairings of `n_slots` slots in canonical order.
/// `step` extends the running accumulator by one pair; `leaf` receives each
/// completed accumulator. Prefix work is shared between pairings.
pub(crate) fn walk_pairings<A, F, L>(n_slots: usize, init: A, mut step: F, mut leaf: L)
where
    F: FnMut(&A, usize, usize) -> A,
    L: FnMut(A),
{
    let mut free: Vec<usize> = (0..n_slots).collect();
    walk(&mut free, init, &mut step, &mut leaf);
}

fn walk<A, F, L>(free: &mut Vec<usize>, acc: A, step: &mut F, leaf: &mut L)
where
    F: FnMut(&A, usize, usize) -> A,
    L: FnMut(A),
{
    if free.is_empty() {
        leaf(acc);
        return;
    }
    let first = free.remove(0);
    for idx in 0..free.len() {
        let partner = free.remove(idx);
        let next = step(&acc, first, partner);
        walk(free, next, step, leaf);
        free.insert(idx, partner);
    }
    free.insert(0, first);
}
