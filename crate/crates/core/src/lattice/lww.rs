use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{Lattice, Timestamp};

/// Last-writer-wins set: a two-phase set whose entries carry timestamps.
///
/// An element is a member iff its newest add is newer than its newest
/// remove. Both halves only grow, so merge is plain union.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LwwSet<T: Ord> {
    pos: BTreeSet<(T, Timestamp)>,
    neg: BTreeSet<(T, Timestamp)>,
}

impl<T: Ord> Default for LwwSet<T> {
    fn default() -> Self {
        Self {
            pos: BTreeSet::new(),
            neg: BTreeSet::new(),
        }
    }
}

impl<T: Ord + Clone> LwwSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: T, ts: Timestamp) -> bool {
        self.pos.insert((x, ts))
    }

    pub fn remove(&mut self, x: T, ts: Timestamp) -> bool {
        self.neg.insert((x, ts))
    }

    fn latest(set: &BTreeSet<(T, Timestamp)>) -> BTreeMap<&T, Timestamp> {
        let mut out: BTreeMap<&T, Timestamp> = BTreeMap::new();
        for (x, ts) in set {
            let e = out.entry(x).or_insert(*ts);
            if *ts > *e {
                *e = *ts;
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

    pub fn contains(&self, x: &T) -> bool {
        let add = self
            .pos
            .iter()
            .filter(|(y, _)| y == x)
            .map(|(_, t)| *t)
            .max();
        let del = self
            .neg
            .iter()
            .filter(|(y, _)| y == x)
            .map(|(_, t)| *t)
            .max();
        match (add, del) {
            (Some(a), Some(d)) => a > d,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn members(&self) -> BTreeSet<T> {
        let adds = Self::latest(&self.pos);
        let dels = Self::latest(&self.neg);
        adds.into_iter()
            .filter(|(x, a)| dels.get(x).is_none_or(|d| a > d))
            .map(|(x, _)| x.clone())
            .collect()
    }
}

impl<T> Lattice for LwwSet<T>
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
