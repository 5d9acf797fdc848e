use serde::{Deserialize, Serialize};

use super::{Datum, TableError};
use crate::hash::{hash_bytes, hash_str};
use crate::runtime::WorkerId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Hash {
        column: String,
    },
    /// `boundaries[i]` is the first key owned by worker `i + 1`.
    Range {
        column: String,
        boundaries: Vec<Datum>,
    },
    RoundRobin,
}

/// Where rows of a global table live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    strategy: Strategy,
    workers: Vec<WorkerId>,
}

/// Result of [`super::GlobalTable::plan_query`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    pub coordination_free: bool,
    pub plan: PartitionPlan,
}

/// Hash used for key placement. Text keys hash their UTF-8 bytes so the
/// owner of a k-mer string is the same whether it is routed as a `Datum`
/// or as a plain `&str`.
pub fn datum_hash(d: &Datum) -> u64 {
    match d {
        Datum::Text(s) => hash_str(0, s),
        Datum::Int(n) => hash_bytes(0, &n.to_le_bytes()),
    }
}

impl PartitionPlan {
    fn check_workers(workers: &[WorkerId]) -> Result<(), TableError> {
        if workers.is_empty() {
            Err(TableError::NoWorkers)
        } else {
            Ok(())
        }
    }

    pub fn hash(column: impl Into<String>, workers: Vec<WorkerId>) -> Result<Self, TableError> {
        Self::check_workers(&workers)?;
        Ok(Self {
            strategy: Strategy::Hash {
                column: column.into(),
            },
            workers,
        })
    }

    /// Boundaries are supplied by the caller, one fewer than the workers.
    pub fn range(
        column: impl Into<String>,
        boundaries: Vec<Datum>,
        workers: Vec<WorkerId>,
    ) -> Result<Self, TableError> {
        Self::check_workers(&workers)?;
        if boundaries.len() + 1 != workers.len() {
            return Err(TableError::Boundaries {
                workers: workers.len(),
                want: workers.len() - 1,
                got: boundaries.len(),
            });
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TableError::UnsortedBoundaries);
        }
        Ok(Self {
            strategy: Strategy::Range {
                column: column.into(),
                boundaries,
            },
            workers,
        })
    }

    pub fn round_robin(workers: Vec<WorkerId>) -> Result<Self, TableError> {
        Self::check_workers(&workers)?;
        Ok(Self {
            strategy: Strategy::RoundRobin,
            workers,
        })
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn workers(&self) -> &[WorkerId] {
        &self.workers
    }

    /// The column a keyed strategy partitions on.
    pub fn column(&self) -> Option<&str> {
        match &self.strategy {
            Strategy::Hash { column } | Strategy::Range { column, .. } => Some(column),
            Strategy::RoundRobin => None,
        }
    }

    pub fn partitions_on(&self, column: &str) -> bool {
        self.column() == Some(column)
    }

    /// Destination for a row. Keyed strategies look only at `key`;
    /// round-robin looks only at `arrival`. A keyed plan given no key falls
    /// back to round-robin.
    pub fn route(&self, key: Option<&Datum>, arrival: u64) -> WorkerId {
        let n = self.workers.len();
        let idx = match (&self.strategy, key) {
            (Strategy::Hash { .. }, Some(k)) => (datum_hash(k) % n as u64) as usize,
            (Strategy::Range { boundaries, .. }, Some(k)) => boundaries.partition_point(|b| b <= k),
            _ => (arrival % n as u64) as usize,
        };
        self.workers[idx]
    }

    /// Owner of `key` under a keyed strategy.
    pub fn owner_of(&self, key: &Datum) -> Option<WorkerId> {
        self.column().map(|_| self.route(Some(key), 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(n: u32) -> Vec<WorkerId> {
        (0..n).map(WorkerId).collect()
    }

    #[test]
    fn range_routing() {
        let p = PartitionPlan::range("c", vec![Datum::Int(10), Datum::Int(20)], ws(3)).unwrap();
        assert_eq!(p.route(Some(&Datum::Int(-5)), 0), WorkerId(0));
        assert_eq!(p.route(Some(&Datum::Int(10)), 0), WorkerId(1));
        assert_eq!(p.route(Some(&Datum::Int(19)), 0), WorkerId(1));
        assert_eq!(p.route(Some(&Datum::Int(20)), 0), WorkerId(2));
    }

    #[test]
    fn range_validation() {
        assert!(matches!(
            PartitionPlan::range("c", vec![], ws(3)),
            Err(TableError::Boundaries { .. })
        ));
        assert_eq!(
            PartitionPlan::range("c", vec![Datum::Int(3), Datum::Int(3)], ws(3)),
            Err(TableError::UnsortedBoundaries)
        );
        assert_eq!(
            PartitionPlan::round_robin(vec![]),
            Err(TableError::NoWorkers)
        );
    }

    #[test]
    fn round_robin_depends_on_arrival_only() {
        let p = PartitionPlan::round_robin(ws(3)).unwrap();
        let k = Datum::text("x");
        let got: Vec<_> = (0..6).map(|i| p.route(Some(&k), i).0).collect();
        assert_eq!(got, vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn hash_is_deterministic() {
        let p = PartitionPlan::hash("seq", ws(4)).unwrap();
        let k = Datum::text("ATAG");
        assert_eq!(p.route(Some(&k), 0), p.route(Some(&k), 99));
        assert_eq!(
            p.route(Some(&k), 0),
            WorkerId(crate::hash::owner_index("ATAG", 4) as u32)
        );
    }
}
