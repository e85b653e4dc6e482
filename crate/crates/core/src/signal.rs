//! Binary signal profiles as bitmask-indexed subsets of bidders.
//!
//! Bidders are 0-based in the API (`0..n`). Bidder index `b` corresponds to
//! bit `b` of the mask, which is the bidder numbered `b + 1` in file formats
//! and human-readable output. A profile `s` is identified with the set of
//! bidders whose signal is 1.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Largest supported bidder count. Tables hold `2^n` entries per bidder.
pub const MAX_BIDDERS: usize = 20;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignalSet(u32);

impl SignalSet {
    pub const EMPTY: SignalSet = SignalSet(0);

    pub const fn from_mask(mask: u32) -> Self {
        SignalSet(mask)
    }

    pub fn from_bidders<I: IntoIterator<Item = usize>>(bidders: I) -> Self {
        SignalSet(bidders.into_iter().fold(0, |m, b| m | (1 << b)))
    }

    /// The set of all `n` bidders.
    pub const fn full(n: usize) -> Self {
        SignalSet(((1u64 << n) - 1) as u32)
    }

    pub const fn mask(self) -> u32 {
        self.0
    }

    /// Position of this set in a `2^n` table.
    pub const fn index(self) -> usize {
        self.0 as usize
    }

    pub const fn contains(self, bidder: usize) -> bool {
        self.0 & (1 << bidder) != 0
    }

    pub const fn with(self, bidder: usize) -> Self {
        SignalSet(self.0 | (1 << bidder))
    }

    pub const fn without(self, bidder: usize) -> Self {
        SignalSet(self.0 & !(1 << bidder))
    }

    pub const fn union(self, other: Self) -> Self {
        SignalSet(self.0 | other.0)
    }

    pub const fn intersection(self, other: Self) -> Self {
        SignalSet(self.0 & other.0)
    }

    pub const fn difference(self, other: Self) -> Self {
        SignalSet(self.0 & !other.0)
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Whether the mask fits a universe of `n` bidders.
    pub const fn fits(self, n: usize) -> bool {
        (self.0 as u64) < (1u64 << n)
    }

    /// Bidders in the set, ascending.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let b = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(b)
            }
        })
    }

    /// All `2^n` subsets in bitmask order.
    pub fn all(n: usize) -> impl Iterator<Item = SignalSet> {
        (0..(1u32 << n)).map(SignalSet)
    }

    /// All `2^n` subsets ordered by cardinality, ties by ascending mask.
    /// Every set precedes each of its strict supersets.
    pub fn inclusion_order(n: usize) -> Vec<SignalSet> {
        let mut order: Vec<SignalSet> = Self::all(n).collect();
        order.sort_by_key(|s| (s.len(), s.mask()));
        order
    }
}

impl fmt::Display for SignalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (pos, b) in self.iter().enumerate() {
            if pos > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", b + 1)?;
        }
        f.write_str("}")
    }
}

impl fmt::Debug for SignalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
