use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{Lattice, LatticeError};

/// Integer that only moves up; merge is `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LMax(pub i64);

impl LMax {
    pub const BOTTOM: LMax = LMax(i64::MIN);

    pub fn value(self) -> i64 {
        self.0
    }
}

impl Default for LMax {
    fn default() -> Self {
        Self::BOTTOM
    }
}

impl Lattice for LMax {
    fn bottom_like(&self) -> Self {
        Self::BOTTOM
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        if other.0 > self.0 {
            self.0 = other.0;
            true
        } else {
            false
        }
    }
}

/// Set lattice; merge is union, so `len` never decreases.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LSet<T: Ord> {
    elems: BTreeSet<T>,
}

impl<T: Ord> Default for LSet<T> {
    fn default() -> Self {
        Self {
            elems: BTreeSet::new(),
        }
    }
}

impl<T: Ord + Clone> LSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(x: T) -> Self {
        let mut s = Self::new();
        s.insert(x);
        s
    }

    pub fn insert(&mut self, x: T) -> bool {
        self.elems.insert(x)
    }

    pub fn contains(&self, x: &T) -> bool {
        self.elems.contains(x)
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.elems.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<T> {
        &self.elems
    }
}

impl<T: Ord + Clone> FromIterator<T> for LSet<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self {
            elems: iter.into_iter().collect(),
        }
    }
}

impl<T> Lattice for LSet<T>
where
    T: Ord + Clone + Debug + Send + Sync + 'static,
{
    fn bottom_like(&self) -> Self {
        Self::default()
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        let before = self.elems.len();
        for x in &other.elems {
            if !self.elems.contains(x) {
                self.elems.insert(x.clone());
            }
        }
        self.elems.len() != before
    }
}

/// Map from keys to lattice values, merged pointwise.
///
/// A key that is absent behaves exactly like a key mapped to bottom, so
/// bottom values are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LMap<K: Ord, V> {
    entries: BTreeMap<K, V>,
}

impl<K: Ord, V> Default for LMap<K, V> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<K, V> LMap<K, V>
where
    K: Ord + Clone,
    V: Lattice,
{
    pub fn new() -> Self {
        Self::default()
    }

    pub fn singleton(key: K, value: V) -> Self {
        let mut m = Self::new();
        m.merge_key(key, &value);
        m
    }

    /// Merges `value` into the entry for `key`; returns whether it changed.
    pub fn merge_key(&mut self, key: K, value: &V) -> bool {
        match self.entries.get_mut(&key) {
            Some(v) => v.merge_from(value),
            None if value.is_bottom() => false,
            None => {
                self.entries.insert(key, value.clone());
                true
            }
        }
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        self.entries.get(key)
    }

    pub fn contains_key(&self, key: &K) -> bool {
        self.entries.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &V)> {
        self.entries.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &K> {
        self.entries.keys()
    }
}

impl<K, V> Lattice for LMap<K, V>
where
    K: Ord + Clone + Debug + Send + Sync + 'static,
    V: Lattice,
{
    fn bottom_like(&self) -> Self {
        Self::default()
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        let mut changed = false;
        for (k, v) in &other.entries {
            changed |= self.merge_key(k.clone(), v);
        }
        changed
    }

    fn check_compatible(&self, other: &Self) -> Result<(), LatticeError> {
        for (k, v) in &other.entries {
            if let Some(mine) = self.entries.get(k) {
                mine.check_compatible(v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::merge;

    #[test]
    fn lmax_is_max_not_sum() {
        assert_eq!(merge(&LMax(5), &LMax(3)).unwrap(), LMax(5));
        assert_eq!(merge(&LMax(3), &LMax(5)).unwrap(), LMax(5));
        assert_eq!(merge(&LMax(4), &LMax(4)).unwrap(), LMax(4));
    }

    #[test]
    fn lmax_bottom_identity() {
        assert_eq!(merge(&LMax::BOTTOM, &LMax(-7)).unwrap(), LMax(-7));
        assert!(LMax::BOTTOM.leq(&LMax(i64::MIN + 1)));
    }

    #[test]
    fn lset_union() {
        let a: LSet<u32> = [1, 2].into_iter().collect();
        let b: LSet<u32> = [2, 3].into_iter().collect();
        let m = merge(&a, &b).unwrap();
        assert_eq!(m, [1, 2, 3].into_iter().collect());
        assert!(a.leq(&m) && b.leq(&m));
        assert!(!m.leq(&a));
    }

    #[test]
    fn lmap_is_pointwise_and_absent_is_bottom() {
        let mut a = LMap::new();
        a.merge_key("x", &LMax(1));
        a.merge_key("y", &LMax(9));
        let mut b = LMap::new();
        b.merge_key("x", &LMax(4));
        b.merge_key("z", &LMax(2));
        let m = merge(&a, &b).unwrap();
        assert_eq!(m.get(&"x"), Some(&LMax(4)));
        assert_eq!(m.get(&"y"), Some(&LMax(9)));
        assert_eq!(m.get(&"z"), Some(&LMax(2)));

        let mut c: LMap<&str, LMax> = LMap::new();
        assert!(!c.merge_key("w", &LMax::BOTTOM));
        assert_eq!(c, LMap::new());
    }
}
