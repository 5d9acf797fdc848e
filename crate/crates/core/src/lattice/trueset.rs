use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use super::{Lattice, Timestamp};

/// One stored use of a token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrueRow<K, V> {
    pub token: K,
    pub use_id: u64,
    pub ts: Timestamp,
    pub payload: V,
}

/// Two-phase set with full set semantics: add, remove, add after remove and
/// update.
///
/// Every write is a fresh row: inserts go to `pos` with a new use id and a
/// timestamp from the writer's clock, deletes go to the tombstone `neg` with
/// a timestamp only. Nothing ever has to be read before writing. A token is
/// live iff its newest `pos` timestamp is newer than its newest `neg`
/// timestamp, and reads report the payload of that newest `pos` row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueSet<K: Ord, V: Ord> {
    pos: BTreeSet<TrueRow<K, V>>,
    neg: BTreeSet<(K, Timestamp)>,
}

impl<K: Ord, V: Ord> Default for TrueSet<K, V> {
    fn default() -> Self {
        Self {
            pos: BTreeSet::new(),
            neg: BTreeSet::new(),
        }
    }
}

impl<K: Ord + Clone, V: Ord + Clone> TrueSet<K, V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Zero-knowledge insert (also used for update and re-insert).
    pub fn insert(&mut self, token: K, use_id: u64, ts: Timestamp, payload: V) -> bool {
        self.pos.insert(TrueRow {
            token,
            use_id,
            ts,
            payload,
        })
    }

    /// Zero-knowledge delete: a tombstone stamped `ts`. It hides exactly the
    /// versions written before `ts`.
    pub fn delete(&mut self, token: K, ts: Timestamp) -> bool {
        self.neg.insert((token, ts))
    }

    pub fn rows(&self) -> impl Iterator<Item = &TrueRow<K, V>> {
        self.pos.iter()
    }

    pub fn tombstones(&self) -> impl Iterator<Item = &(K, Timestamp)> {
        self.neg.iter()
    }

    fn newest_rows(&self) -> BTreeMap<&K, &TrueRow<K, V>> {
        let mut best: BTreeMap<&K, &TrueRow<K, V>> = BTreeMap::new();
        for row in &self.pos {
            let e = best.entry(&row.token).or_insert(row);
            if (row.ts, row.use_id) > (e.ts, e.use_id) {
                *e = row;
            }
        }
        best
    }

    fn newest_tombstones(&self) -> BTreeMap<&K, Timestamp> {
        let mut best: BTreeMap<&K, Timestamp> = BTreeMap::new();
        for (k, ts) in &self.neg {
            let e = best.entry(k).or_insert(*ts);
            if *ts > *e {
                *e = *ts;
            }
        }
        best
    }

    /// Live tokens with their newest payload.
    pub fn read(&self) -> BTreeMap<K, V> {
        let dead = self.newest_tombstones();
        self.newest_rows()
            .into_iter()
            .filter(|(k, row)| dead.get(k).is_none_or(|d| row.ts > *d))
            .map(|(k, row)| (k.clone(), row.payload.clone()))
            .collect()
    }

    pub fn is_live(&self, token: &K) -> bool {
        let newest = self
            .pos
            .iter()
            .filter(|r| &r.token == token)
            .map(|r| r.ts)
            .max();
        let dead = self
            .neg
            .iter()
            .filter(|(k, _)| k == token)
            .map(|(_, t)| *t)
            .max();
        match (newest, dead) {
            (Some(a), Some(d)) => a > d,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn get(&self, token: &K) -> Option<V> {
        if !self.is_live(token) {
            return None;
        }
        self.pos
            .iter()
            .filter(|r| &r.token == token)
            .max_by_key(|r| (r.ts, r.use_id))
            .map(|r| r.payload.clone())
    }

    pub fn stored_rows(&self) -> usize {
        self.pos.len() + self.neg.len()
    }
}

impl<K, V> Lattice for TrueSet<K, V>
where
    K: Ord + Clone + Debug + Send + Sync + 'static,
    V: Ord + Clone + Debug + Send + Sync + 'static,
{
    fn bottom_like(&self) -> Self {
        Self::default()
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        let before = self.stored_rows();
        self.pos.extend(other.pos.iter().cloned());
        self.neg.extend(other.neg.iter().cloned());
        before != self.stored_rows()
    }
}
