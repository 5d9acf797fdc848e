use std::collections::BTreeSet;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{Lattice, LatticeError};

/// A set that accepts new elements only while the receiving side is below
/// `threshold`.
///
/// `merge(a, b)` is `a ∪ b` when `|a| < threshold`, otherwise `a`. The guard
/// looks at the left (receiving) operand only, so merge is idempotent but not
/// commutative. What *is* order independent is the predicate
/// `len() >= threshold`, and exactness below the threshold: as long as the
/// true number of distinct elements is under the threshold every merge takes
/// the union branch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuddyLSet<T: Ord> {
    elems: BTreeSet<T>,
    threshold: usize,
}

impl<T: Ord + Clone> BuddyLSet<T> {
    pub fn new(threshold: usize) -> Result<Self, LatticeError> {
        if threshold == 0 {
            return Err(LatticeError::ZeroThreshold);
        }
        Ok(Self {
            elems: BTreeSet::new(),
            threshold,
        })
    }

    pub fn singleton(threshold: usize, x: T) -> Result<Self, LatticeError> {
        let mut s = Self::new(threshold)?;
        s.elems.insert(x);
        Ok(s)
    }

    /// Local insert; subject to the same guard as merge.
    pub fn insert(&mut self, x: T) -> bool {
        if self.reached() {
            return false;
        }
        self.elems.insert(x)
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn reached(&self) -> bool {
        self.elems.len() >= self.threshold
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.elems.iter()
    }
}

impl<T> Lattice for BuddyLSet<T>
where
    T: Ord + Clone + Debug + Send + Sync + 'static,
{
    fn bottom_like(&self) -> Self {
        Self {
            elems: BTreeSet::new(),
            threshold: self.threshold,
        }
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        debug_assert_eq!(self.threshold, other.threshold);
        if self.reached() {
            return false;
        }
        let before = self.elems.len();
        for x in &other.elems {
            if !self.elems.contains(x) {
                self.elems.insert(x.clone());
            }
        }
        self.elems.len() != before
    }

    fn check_compatible(&self, other: &Self) -> Result<(), LatticeError> {
        if self.threshold != other.threshold {
            return Err(LatticeError::ThresholdMismatch {
                left: self.threshold,
                right: other.threshold,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::merge;

    fn set(t: usize, xs: &[u32]) -> BuddyLSet<u32> {
        let mut s = BuddyLSet::new(t).unwrap();
        for &x in xs {
            s.elems.insert(x);
        }
        s
    }

    #[test]
    fn union_below_threshold() {
        let m = merge(&set(3, &[1]), &set(3, &[2])).unwrap();
        assert_eq!(m, set(3, &[1, 2]));
    }

    #[test]
    fn guard_on_receiving_side() {
        let full = set(3, &[1, 2, 3]);
        let m = merge(&full, &set(3, &[4, 5])).unwrap();
        assert_eq!(m, full);
        // the other direction still unions: the guard is asymmetric
        let m = merge(&set(3, &[4, 5]), &full).unwrap();
        assert_eq!(m.len(), 5);
    }

    #[test]
    fn bottom_is_right_identity() {
        for xs in [&[][..], &[1], &[1, 2, 3, 4]] {
            let a = set(3, xs);
            assert_eq!(merge(&a, &a.bottom_like()).unwrap(), a);
            assert_eq!(merge(&a.bottom_like(), &a).unwrap(), a);
        }
    }

    #[test]
    fn threshold_mismatch_is_an_error() {
        let err = merge(&set(3, &[1]), &set(4, &[2])).unwrap_err();
        assert_eq!(err, LatticeError::ThresholdMismatch { left: 3, right: 4 });
        assert_eq!(
            BuddyLSet::<u32>::new(0).unwrap_err(),
            LatticeError::ZeroThreshold
        );
    }

    #[test]
    fn local_insert_respects_guard() {
        let mut s = set(2, &[1]);
        assert!(s.insert(2));
        assert!(!s.insert(3));
        assert_eq!(s.len(), 2);
    }
}
