use std::collections::BTreeSet;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::Lattice;

/// Grow-only set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GSet<T: Ord> {
    elems: BTreeSet<T>,
}

impl<T: Ord> Default for GSet<T> {
    fn default() -> Self {
        Self {
            elems: BTreeSet::new(),
        }
    }
}

impl<T: Ord + Clone> GSet<T> {
    pub fn new() -> Self {
        Self::default()
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

impl<T: Ord + Clone> FromIterator<T> for GSet<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self {
            elems: iter.into_iter().collect(),
        }
    }
}

impl<T> Lattice for GSet<T>
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
        before != self.elems.len()
    }
}

/// Two-phase set: an element is a member iff it is in `pos` and not in
/// `neg`. `neg` is a tombstone set, so a removed element never comes back.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TwoPSet<T: Ord> {
    pos: GSet<T>,
    neg: GSet<T>,
}

impl<T: Ord> Default for TwoPSet<T> {
    fn default() -> Self {
        Self {
            pos: GSet::default(),
            neg: GSet::default(),
        }
    }
}

impl<T: Ord + Clone> TwoPSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(pos: GSet<T>, neg: GSet<T>) -> Self {
        Self { pos, neg }
    }

    pub fn insert(&mut self, x: T) -> bool {
        self.pos.insert(x)
    }

    pub fn remove(&mut self, x: T) -> bool {
        self.neg.insert(x)
    }

    pub fn contains(&self, x: &T) -> bool {
        self.pos.contains(x) && !self.neg.contains(x)
    }

    pub fn pos(&self) -> &GSet<T> {
        &self.pos
    }

    pub fn neg(&self) -> &GSet<T> {
        &self.neg
    }

    /// `pos − neg`, computed in one pass over `pos`.
    pub fn read(&self) -> BTreeSet<T> {
        self.pos
            .iter()
            .filter(|x| !self.neg.contains(x))
            .cloned()
            .collect()
    }
}

impl<T> Lattice for TwoPSet<T>
where
    T: Ord + Clone + Debug + Send + Sync + 'static,
{
    fn bottom_like(&self) -> Self {
        Self::default()
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        let a = self.pos.merge_from(&other.pos);
        let b = self.neg.merge_from(&other.neg);
        a || b
    }
}
