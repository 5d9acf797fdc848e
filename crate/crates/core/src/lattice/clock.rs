use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Logical timestamp: a per-worker counter with the worker id as tiebreak.
///
/// Ordering is lexicographic on `(time, worker)`, which makes it total; two
/// distinct writes can never carry equal timestamps as long as every worker
/// stamps from its own [`LogicalClock`].
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Timestamp {
    pub time: u64,
    pub worker: u32,
}

impl Timestamp {
    pub const fn new(time: u64, worker: u32) -> Self {
        Self { time, worker }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.time, self.worker)
    }
}

/// Lamport-style clock owned by one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicalClock {
    worker: u32,
    time: u64,
}

impl LogicalClock {
    pub fn new(worker: u32) -> Self {
        Self { worker, time: 0 }
    }

    /// Advances and returns a fresh timestamp.
    pub fn tick(&mut self) -> Timestamp {
        self.time += 1;
        Timestamp::new(self.time, self.worker)
    }

    /// Moves the clock past a remotely observed timestamp.
    pub fn observe(&mut self, ts: Timestamp) {
        self.time = self.time.max(ts.time);
    }

    pub fn peek(&self) -> Timestamp {
        Timestamp::new(self.time, self.worker)
    }
}

/// Per-worker version vector. Missing entries are zero.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct VersionVector(BTreeMap<u32, u64>);

impl VersionVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, worker: u32) -> u64 {
        self.0.get(&worker).copied().unwrap_or(0)
    }

    pub fn increment(&mut self, worker: u32) {
        *self.0.entry(worker).or_insert(0) += 1;
    }

    /// Pointwise max.
    pub fn join(&mut self, other: &Self) {
        for (&w, &n) in &other.0 {
            let e = self.0.entry(w).or_insert(0);
            if n > *e {
                *e = n;
            }
        }
    }

    /// Causal comparison; `None` when the vectors are concurrent.
    pub fn causal_cmp(&self, other: &Self) -> Option<Ordering> {
        let mut less = false;
        let mut greater = false;
        for w in self.0.keys().chain(other.0.keys()) {
            match self.get(*w).cmp(&other.get(*w)) {
                Ordering::Less => less = true,
                Ordering::Greater => greater = true,
                Ordering::Equal => {}
            }
        }
        match (less, greater) {
            (false, false) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (true, true) => None,
        }
    }

    pub fn dominated_by(&self, other: &Self) -> bool {
        self.causal_cmp(other) == Some(Ordering::Less)
    }
}

impl<const N: usize> From<[(u32, u64); N]> for VersionVector {
    fn from(entries: [(u32, u64); N]) -> Self {
        Self(entries.into_iter().filter(|&(_, n)| n > 0).collect())
    }
}
