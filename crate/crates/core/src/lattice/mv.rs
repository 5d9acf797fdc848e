use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{Lattice, VersionVector};

/// Multi-value set: a two-phase set whose entries carry version vectors.
///
/// Writers stamp an add or remove with [`MvSet::next_version`], which
/// dominates every version the writer has seen for that element. Concurrent
/// writes (incomparable vectors) are all kept, and a read reports every
/// maximal version of each element rather than picking a winner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MvSet<T: Ord> {
    pos: BTreeSet<(T, VersionVector)>,
    neg: BTreeSet<(T, VersionVector)>,
}

/// One maximal version of an element.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct MvVersion {
    pub version: VersionVector,
    pub removed: bool,
}

/// Result of [`MvSet::read`]: element to its maximal versions. Elements
/// whose maximal versions are all removals are omitted.
pub type MvRead<T> = BTreeMap<T, Vec<MvVersion>>;

impl<T: Ord> Default for MvSet<T> {
    fn default() -> Self {
        Self {
            pos: BTreeSet::new(),
            neg: BTreeSet::new(),
        }
    }
}

impl<T: Ord + Clone> MvSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Version for a new write by `worker`: the join of everything seen for
    /// `x`, bumped at `worker`.
    pub fn next_version(&self, x: &T, worker: u32) -> VersionVector {
        let mut vv = VersionVector::new();
        for (y, v) in self.pos.iter().chain(self.neg.iter()) {
            if y == x {
                vv.join(v);
            }
        }
        vv.increment(worker);
        vv
    }

    pub fn add(&mut self, x: T, version: VersionVector) -> bool {
        self.pos.insert((x, version))
    }

    pub fn remove(&mut self, x: T, version: VersionVector) -> bool {
        self.neg.insert((x, version))
    }

    /// Convenience: add stamped with `next_version`.
    pub fn add_as(&mut self, x: T, worker: u32) -> VersionVector {
        let v = self.next_version(&x, worker);
        self.pos.insert((x, v.clone()));
        v
    }

    pub fn remove_as(&mut self, x: T, worker: u32) -> VersionVector {
        let v = self.next_version(&x, worker);
        self.neg.insert((x, v.clone()));
        v
    }

    pub fn read(&self) -> MvRead<T> {
        let mut all: BTreeMap<&T, Vec<MvVersion>> = BTreeMap::new();
        for (x, v) in &self.pos {
            all.entry(x).or_default().push(MvVersion {
                version: v.clone(),
                removed: false,
            });
        }
        for (x, v) in &self.neg {
            all.entry(x).or_default().push(MvVersion {
                version: v.clone(),
                removed: true,
            });
        }
        let mut out = BTreeMap::new();
        for (x, versions) in all {
            let mut maximal: Vec<MvVersion> = versions
                .iter()
                .filter(|a| !versions.iter().any(|b| a.version.dominated_by(&b.version)))
                .cloned()
                .collect();
            maximal.sort();
            maximal.dedup();
            if maximal.iter().any(|v| !v.removed) {
                out.insert(x.clone(), maximal);
            }
        }
        out
    }

    /// Every element that has ever been added or removed.
    pub fn elements(&self) -> BTreeSet<T> {
        self.pos
            .iter()
            .chain(self.neg.iter())
            .map(|(x, _)| x.clone())
            .collect()
    }

    pub fn members(&self) -> BTreeSet<T> {
        self.read().into_keys().collect()
    }

    pub fn contains(&self, x: &T) -> bool {
        self.read().contains_key(x)
    }
}

impl<T> Lattice for MvSet<T>
where
    T: Ord + Clone + Debug + Send + Sync + 'static,
{
    fn bottom_like(&self) -> Self {
        Self::default()
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        let before = self.pos.len() + self.neg.len();
        self.pos.extend(other.pos.iter().cloned());
        self.neg.extend(other.neg.iter().cloned());
        before != self.pos.len() + self.neg.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_remove_hides_element() {
        let mut s = MvSet::new();
        s.add_as("x", 0);
        s.remove_as("x", 0);
        assert!(!s.contains(&"x"));
        s.add_as("x", 1);
        assert!(s.contains(&"x"));
    }

    #[test]
    fn concurrent_writes_are_all_reported() {
        let mut a = MvSet::new();
        let mut b = MvSet::new();
        a.add_as("x", 0);
        b.add_as("x", 1);
        a.merge_from(&b);
        let read = a.read();
        assert_eq!(read[&"x"].len(), 2);
    }

    #[test]
    fn concurrent_remove_and_add_surfaces_both() {
        let mut base = MvSet::new();
        base.add_as("x", 0);
        let mut a = base.clone();
        let mut b = base.clone();
        a.remove_as("x", 0);
        b.add_as("x", 1);
        a.merge_from(&b);
        let versions = &a.read()[&"x"];
        assert_eq!(versions.len(), 2);
        assert!(versions.iter().any(|v| v.removed));
        assert!(versions.iter().any(|v| !v.removed));
    }
}
