//! Leaf subsets as bit masks.
//!
//! Leaf label `i` (1-based) is stored at bit `i - 1`. Cells of a joint table
//! use the same masks: the cell `α ∈ {0,1}^n` is the set of leaves with
//! `α_i = 1`. File formats list cells in *external* order, the binary value of
//! the string `α_1 α_2 … α_n` with `α_1` most significant; see
//! [`LeafSet::external_index`].

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Largest supported number of leaves.
pub const MAX_LEAVES: usize = 24;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LeafSet(pub u32);

impl LeafSet {
    pub const EMPTY: LeafSet = LeafSet(0);

    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_LEAVES);
        LeafSet(((1u64 << n) - 1) as u32)
    }

    pub fn singleton(label: usize) -> Self {
        debug_assert!(label >= 1);
        LeafSet(1 << (label - 1))
    }

    pub fn from_labels<I: IntoIterator<Item = usize>>(labels: I) -> Self {
        labels.into_iter().fold(LeafSet::EMPTY, |s, l| s.with(l))
    }

    pub fn with(self, label: usize) -> Self {
        LeafSet(self.0 | (1 << (label - 1)))
    }

    pub fn contains(self, label: usize) -> bool {
        label >= 1 && self.0 & (1 << (label - 1)) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: LeafSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: LeafSet) -> Self {
        LeafSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LeafSet) -> Self {
        LeafSet(self.0 & other.0)
    }

    pub fn difference(self, other: LeafSet) -> Self {
        LeafSet(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: LeafSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Smallest label, if any.
    pub fn min_label(self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0.trailing_zeros() as usize + 1)
        }
    }

    /// Labels in increasing order.
    pub fn labels(self) -> Labels {
        Labels(self.0)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Position of this cell/subset in the external (file) order for `n` leaves.
    pub fn external_index(self, n: usize) -> usize {
        let mut k = 0usize;
        for i in 1..=n {
            k <<= 1;
            if self.contains(i) {
                k |= 1;
            }
        }
        k
    }

    pub fn from_external_index(k: usize, n: usize) -> Self {
        let mut s = LeafSet::EMPTY;
        for i in 1..=n {
            if (k >> (n - i)) & 1 == 1 {
                s = s.with(i);
            }
        }
        s
    }

    /// The cell written as a 0/1 string `α_1 … α_n`.
    pub fn binary_string(self, n: usize) -> String {
        (1..=n).map(|i| if self.contains(i) { '1' } else { '0' }).collect()
    }

    /// All subsets of `self`, in increasing mask order.
    pub fn subsets(self) -> Subsets {
        Subsets { mask: self.0, next: Some(0) }
    }
}

impl fmt::Debug for LeafSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, l) in self.labels().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for LeafSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "∅");
        }
        let wide = self.labels().any(|l| l > 9);
        for (k, l) in self.labels().enumerate() {
            if wide && k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

pub struct Labels(u32);

impl Iterator for Labels {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let b = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(b as usize + 1)
    }
}

/// Enumerates submasks of a mask in increasing order.
pub struct Subsets {
    mask: u32,
    next: Option<u32>,
}

impl Iterator for Subsets {
    type Item = LeafSet;

    fn next(&mut self) -> Option<LeafSet> {
        let cur = self.next?;
        self.next = if cur == self.mask { None } else { Some(((cur | !self.mask).wrapping_add(1)) & self.mask) };
        Some(LeafSet(cur))
    }
}

/// Nonempty subsets of `set` listed in the row/column order of a flattening:
/// the binary order of `α` restricted to `set`, first element most significant,
/// all-zeros first.
pub fn ordered_subsets(set: LeafSet) -> Vec<LeafSet> {
    let labels: Vec<usize> = set.labels().collect();
    let r = labels.len();
    (0..(1usize << r))
        .map(|k| {
            let mut s = LeafSet::EMPTY;
            for (pos, &l) in labels.iter().enumerate() {
                if (k >> (r - 1 - pos)) & 1 == 1 {
                    s = s.with(l);
                }
            }
            s
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn external_order_matches_binary_strings() {
        let n = 4;
        let s = LeafSet::from_labels([4]);
        assert_eq!(s.external_index(n), 1);
        assert_eq!(s.binary_string(n), "0001");
        let s = LeafSet::from_labels([1, 2]);
        assert_eq!(s.external_index(n), 12);
        for k in 0..16 {
            assert_eq!(LeafSet::from_external_index(k, n).external_index(n), k);
        }
    }

    #[test]
    fn submask_enumeration() {
        let s = LeafSet::from_labels([1, 3]);
        let subs: Vec<_> = s.subsets().collect();
        assert_eq!(subs, vec![LeafSet(0), LeafSet(1), LeafSet(4), LeafSet(5)]);
        assert_eq!(LeafSet::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn flattening_order() {
        let a = LeafSet::from_labels([1, 2]);
        let o = ordered_subsets(a);
        assert_eq!(o, vec![LeafSet::EMPTY, LeafSet::singleton(2), LeafSet::singleton(1), LeafSet::from_labels([1, 2])]);
    }
}
