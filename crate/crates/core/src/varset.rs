//! Bitset over variable indices.

use std::fmt;

/// A set of variable indices, stored as a bitmask. Iteration and printing
/// use ascending index order, which makes the representation canonical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct VarSet(u32);

/// Hard ceiling imposed by the bitmask width.
pub const MAX_SET_VARIABLES: usize = 32;

impl VarSet {
    pub const EMPTY: VarSet = VarSet(0);

    pub fn from_bits(bits: u32) -> Self {
        VarSet(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    /// `{0, 1, ..., n-1}`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_SET_VARIABLES);
        if n == 32 {
            VarSet(u32::MAX)
        } else {
            VarSet((1u32 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Self {
        VarSet(1 << i)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(it: I) -> Self {
        it.into_iter().fold(VarSet::EMPTY, |s, i| s.with(i))
    }

    pub fn with(self, i: usize) -> Self {
        VarSet(self.0 | (1 << i))
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
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

    pub fn is_subset(self, other: VarSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Strict inclusion `self ⊂ other`.
    pub fn is_proper_subset(self, other: VarSet) -> bool {
        self.is_subset(other) && self != other
    }

    pub fn is_disjoint(self, other: VarSet) -> bool {
        self.0 & other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Enumerates every non-empty subset of `self` in increasing bit order.
    pub fn nonempty_subsets(self) -> impl Iterator<Item = VarSet> {
        let mask = self.0;
        let mut sub: u32 = 0;
        let mut done = mask == 0;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            // next subset of `mask` in increasing numeric order
            sub = (sub.wrapping_sub(mask)) & mask;
            if sub == 0 {
                done = true;
                return None;
            }
            Some(VarSet(sub))
        })
    }
}

impl fmt::Display for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}
