//! Subsets of the variable index set, stored as bitmasks.
//!
//! Variables are identified by small integers `0..MAX_VARS`. User-facing
//! output (reports, CLI flags) uses 1-based numbering; [`VarSet::one_based`]
//! and [`VarSet::from_one_based`] convert at the boundary.

use std::cmp::Ordering;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest number of variables a table may carry.
pub const MAX_VARS: usize = 32;

/// A set of variable ids.
///
/// Iteration is always ascending. The [`Ord`] implementation orders sets by
/// cardinality first and then lexicographically by their sorted ids, which is
/// the enumeration order used for every report.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct VarSet(u32);

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn from_bits(bits: u32) -> Self {
        VarSet(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn singleton(id: usize) -> Self {
        assert!(id < MAX_VARS, "variable id {id} out of range");
        VarSet(1 << id)
    }

    /// The set `{0, 1, ..., n-1}`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_VARS);
        if n == MAX_VARS {
            VarSet(u32::MAX)
        } else {
            VarSet((1u32 << n) - 1)
        }
    }

    pub fn from_ids<I: IntoIterator<Item = usize>>(ids: I) -> Self {
        ids.into_iter()
            .fold(VarSet::EMPTY, |acc, id| acc.union(VarSet::singleton(id)))
    }

    /// Builds a set from 1-based ids, rejecting 0 and ids beyond `MAX_VARS`.
    pub fn from_one_based<I: IntoIterator<Item = usize>>(ids: I) -> Option<Self> {
        let mut set = VarSet::EMPTY;
        for id in ids {
            if id == 0 || id > MAX_VARS {
                return None;
            }
            set = set.union(VarSet::singleton(id - 1));
        }
        Some(set)
    }

    pub fn one_based(self) -> Vec<usize> {
        self.iter().map(|id| id + 1).collect()
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, id: usize) -> bool {
        id < MAX_VARS && self.0 & (1 << id) != 0
    }

    pub fn is_subset(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_proper_subset(self, other: VarSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn is_disjoint(self, other: VarSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn intersects(self, other: VarSet) -> bool {
        !self.is_disjoint(other)
    }

    pub fn union(self, other: VarSet) -> VarSet {
        VarSet(self.0 | other.0)
    }

    pub fn intersection(self, other: VarSet) -> VarSet {
        VarSet(self.0 & other.0)
    }

    pub fn difference(self, other: VarSet) -> VarSet {
        VarSet(self.0 & !other.0)
    }

    pub fn insert(self, id: usize) -> VarSet {
        self.union(VarSet::singleton(id))
    }

    pub fn remove(self, id: usize) -> VarSet {
        self.difference(VarSet::singleton(id))
    }

    /// Position of `id` among the ascending members of the set.
    pub fn position(self, id: usize) -> Option<usize> {
        if !self.contains(id) {
            return None;
        }
        Some((self.0 & ((1u32 << id) - 1)).count_ones() as usize)
    }

    /// Ascending iterator over member ids.
    pub fn iter(self) -> Iter {
        Iter(self.0)
    }

    /// All subsets, ordered by cardinality and then lexicographically.
    pub fn subsets(self) -> Vec<VarSet> {
        let mut out: Vec<VarSet> = SubsetIter::new(self).collect();
        out.sort();
        out
    }

    /// Subsets in raw bitmask order (cheaper, but not the canonical order).
    pub fn subsets_unordered(self) -> SubsetIter {
        SubsetIter::new(self)
    }

    /// Sets `Z` with `self ⊆ Z ⊆ within`, in canonical order.
    pub fn supersets_within(self, within: VarSet) -> Vec<VarSet> {
        debug_assert!(self.is_subset(within));
        let mut out: Vec<VarSet> = SubsetIter::new(within.difference(self))
            .map(|extra| extra.union(self))
            .collect();
        out.sort();
        out
    }
}

impl Ord for VarSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl PartialOrd for VarSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, id) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", id + 1)?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromIterator<usize> for VarSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        VarSet::from_ids(iter)
    }
}

/// Serialized as a list of 1-based ids.
impl Serialize for VarSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for VarSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let ids = Vec::<usize>::deserialize(deserializer)?;
        VarSet::from_one_based(ids.iter().copied()).ok_or_else(|| {
            D::Error::custom(format!("variable ids must be in 1..={MAX_VARS}: {ids:?}"))
        })
    }
}

#[derive(Clone)]
pub struct Iter(u32);

impl Iterator for Iter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let id = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(id)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Iter {}

/// Enumerates every subset of a mask, starting from the empty set.
pub struct SubsetIter {
    mask: u32,
    current: u32,
    done: bool,
}

impl SubsetIter {
    fn new(set: VarSet) -> Self {
        SubsetIter {
            mask: set.0,
            current: 0,
            done: false,
        }
    }
}

impl Iterator for SubsetIter {
    type Item = VarSet;

    fn next(&mut self) -> Option<VarSet> {
        if self.done {
            return None;
        }
        let out = VarSet(self.current);
        if self.current == self.mask {
            self.done = true;
        } else {
            self.current = (self.current.wrapping_sub(self.mask)) & self.mask;
        }
        Some(out)
    }
}
