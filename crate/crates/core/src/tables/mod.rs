//! Global tables over CRDT shards.
//!
//! A [`GlobalTable`] is logically one collection of rows. Physically it is a
//! set of per-worker shards, each a CRDT of the table's fixed
//! [`CrdtKind`], plus a [`PartitionPlan`] deciding where new rows go. The
//! logical contents are always the merge of all shards, whatever the plan
//! says, so changing the plan never changes what the table holds.

mod crdt;
pub mod dataflow;
mod plan;
mod tristate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Lattice, LatticeError};
use crate::runtime::{NetworkCondition, WorkerId};

pub use crdt::{CrdtKind, CrdtValue, Write};
pub use dataflow::{DataflowGraph, Edge, EdgeKind};
pub use plan::{PartitionPlan, QueryPlan, Strategy};
pub use tristate::Tristate;

/// Default skew factor for [`GlobalTable::detect_skew`].
pub const DEFAULT_SKEW_FACTOR: f64 = 2.0;

/// A single column value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Datum {
    Int(i64),
    Text(String),
}

impl Datum {
    pub fn text(s: impl Into<String>) -> Self {
        Datum::Text(s.into())
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Datum::Text(s) => Some(s),
            Datum::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Datum::Int(n) => Some(*n),
            Datum::Text(_) => None,
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Int(n) => write!(f, "{n}"),
            Datum::Text(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Datum {
    fn from(n: i64) -> Self {
        Datum::Int(n)
    }
}

impl From<&str> for Datum {
    fn from(s: &str) -> Self {
        Datum::Text(s.to_owned())
    }
}

impl From<String> for Datum {
    fn from(s: String) -> Self {
        Datum::Text(s)
    }
}

pub type Row = Vec<Datum>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("table must have at least one column")]
    EmptySchema,
    #[error("row has {got} columns, schema has {want}")]
    Arity { got: usize, want: usize },
    #[error("{write} is not a valid write for a {kind:?} table")]
    WrongWrite { write: &'static str, kind: CrdtKind },
    #[error("partition plan has no workers")]
    NoWorkers,
    #[error("range plan over {workers} workers needs {want} boundaries, got {got}")]
    Boundaries {
        workers: usize,
        want: usize,
        got: usize,
    },
    #[error("range boundaries must be strictly increasing")]
    UnsortedBoundaries,
    #[error("worker {0} is not part of the plan")]
    UnknownWorker(WorkerId),
    #[error("skew factor must be greater than 1, got {0}")]
    SkewFactor(f64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// A named, CRDT-typed, sharded collection of rows.
#[derive(Debug, Clone)]
pub struct GlobalTable {
    name: String,
    kind: CrdtKind,
    schema: Vec<String>,
    key_column: usize,
    shards: BTreeMap<WorkerId, CrdtValue>,
    plan: PartitionPlan,
    arrivals: u64,
    // Every stored row sits where the current plan would route it.
    placement_consistent: bool,
}

impl GlobalTable {
    pub fn new(
        name: impl Into<String>,
        kind: CrdtKind,
        schema: &[&str],
        plan: PartitionPlan,
    ) -> Result<Self, TableError> {
        if schema.is_empty() {
            return Err(TableError::EmptySchema);
        }
        let schema: Vec<String> = schema.iter().map(|s| s.to_string()).collect();
        if let Some(col) = plan.column() {
            if !schema.iter().any(|c| c == col) {
                return Err(TableError::UnknownColumn(col.to_owned()));
            }
        }
        let shards = plan
            .workers()
            .iter()
            .map(|&w| (w, CrdtValue::bottom(kind)))
            .collect();
        Ok(Self {
            name: name.into(),
            kind,
            schema,
            key_column: 0,
            shards,
            plan,
            arrivals: 0,
            placement_consistent: true,
        })
    }

    /// Builds a table around shards that were filled elsewhere (for example
    /// by the simulator), checking whether each row sits where the plan
    /// would have put it.
    pub fn from_shards(
        name: impl Into<String>,
        kind: CrdtKind,
        schema: &[&str],
        plan: PartitionPlan,
        shards: BTreeMap<WorkerId, CrdtValue>,
    ) -> Result<Self, TableError> {
        let mut table = Self::new(name, kind, schema, plan)?;
        for (w, shard) in shards {
            if shard.kind() != kind {
                return Err(LatticeError::TypeMismatch {
                    left: kind.name(),
                    right: shard.kind().name(),
                }
                .into());
            }
            table.shards.insert(w, shard);
        }
        table.placement_consistent = table.placement_matches_plan();
        Ok(table)
    }

    /// Chooses which column `lookup` keys on (defaults to the first).
    pub fn with_key_column(mut self, column: &str) -> Result<Self, TableError> {
        self.key_column = self.column_index(column)?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> CrdtKind {
        self.kind
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn key_column(&self) -> &str {
        &self.schema[self.key_column]
    }

    pub fn placement_consistent(&self) -> bool {
        self.placement_consistent
    }

    pub fn column_index(&self, column: &str) -> Result<usize, TableError> {
        self.schema
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| TableError::UnknownColumn(column.to_owned()))
    }

    pub fn shard(&self, worker: WorkerId) -> Option<&CrdtValue> {
        self.shards.get(&worker)
    }

    pub fn shards(&self) -> &BTreeMap<WorkerId, CrdtValue> {
        &self.shards
    }

    fn check_row(&self, row: &Row) -> Result<(), TableError> {
        if row.len() != self.schema.len() {
            return Err(TableError::Arity {
                got: row.len(),
                want: self.schema.len(),
            });
        }
        Ok(())
    }

    fn routing_key<'a>(&self, write: &'a Write) -> Option<&'a Datum> {
        let col = self.plan.column()?;
        let idx = self.schema.iter().position(|c| c == col)?;
        match write {
            Write::Delete { key, .. } => (idx == self.key_column).then_some(key),
            other => other.row().and_then(|r| r.get(idx)),
        }
    }

    /// Routes `write` by the current plan and applies it to that shard.
    pub fn apply(&mut self, write: Write) -> Result<WorkerId, TableError> {
        if let Some(row) = write.row() {
            self.check_row(row)?;
        }
        let key = self.routing_key(&write);
        let keyed = key.is_some();
        let dst = self.plan.route(key, self.arrivals);
        self.arrivals += 1;
        if !keyed && self.plan.column().is_some() {
            // a tombstone routed without its key lands off-owner
            self.placement_consistent = false;
        }
        self.write_shard(dst, write)?;
        Ok(dst)
    }

    /// Applies `write` to a specific shard, bypassing the plan.
    pub fn apply_at(&mut self, worker: WorkerId, write: Write) -> Result<(), TableError> {
        if let Some(row) = write.row() {
            self.check_row(row)?;
        }
        if self.plan.column().is_some() {
            let key = self.routing_key(&write);
            if key.is_none() || self.plan.route(key, 0) != worker {
                self.placement_consistent = false;
            }
        }
        self.write_shard(worker, write)
    }

    fn write_shard(&mut self, worker: WorkerId, write: Write) -> Result<(), TableError> {
        let key_column = self.key_column;
        let kind = self.kind;
        let shard = self
            .shards
            .entry(worker)
            .or_insert_with(|| CrdtValue::bottom(kind));
        shard.apply(write, key_column)
    }

    /// Merge of every shard.
    pub fn merged(&self) -> CrdtValue {
        let mut out = CrdtValue::bottom(self.kind);
        for shard in self.shards.values() {
            out.merge_from(shard);
        }
        out
    }

    /// Live rows of the merged table.
    pub fn rows(&self) -> BTreeSet<Row> {
        self.merged().live_rows()
    }

    /// Logical read for kinds whose reads are only final once every write
    /// has arrived (two-phase sets). Callers invoke it after the simulation
    /// has quiesced; no online blocking is attempted.
    pub fn quiescent_read(&self) -> BTreeSet<Row> {
        self.rows()
    }

    pub fn shard_sizes(&self) -> BTreeMap<WorkerId, usize> {
        self.plan
            .workers()
            .iter()
            .map(|w| {
                let n = self.shards.get(w).map_or(0, |s| s.live_rows().len());
                (*w, n)
            })
            .collect()
    }

    /// Whether the group-by can be computed shard by shard with no
    /// communication.
    pub fn plan_query(&self, group_by: &str) -> Result<QueryPlan, TableError> {
        self.column_index(group_by)?;
        let single = self.plan.workers().len() <= 1;
        let keyed = self.plan.partitions_on(group_by) && self.placement_consistent;
        Ok(QueryPlan {
            coordination_free: single || keyed,
            plan: self.plan.clone(),
        })
    }

    /// True iff the largest shard holds more than `factor` times the mean.
    pub fn detect_skew(&self, factor: f64) -> Result<bool, TableError> {
        if factor.is_nan() || factor <= 1.0 {
            return Err(TableError::SkewFactor(factor));
        }
        let sizes: Vec<usize> = self.shard_sizes().into_values().collect();
        let total: usize = sizes.iter().sum();
        if total == 0 {
            return Ok(false);
        }
        let mean = total as f64 / sizes.len() as f64;
        let max = *sizes.iter().max().unwrap_or(&0) as f64;
        Ok(max > factor * mean)
    }

    /// Replaces the plan. Existing rows stay where they are; only future
    /// writes follow the new plan.
    pub fn switch_partitioning(&mut self, plan: PartitionPlan) -> Result<(), TableError> {
        if let Some(col) = plan.column() {
            self.column_index(col)?;
        }
        if plan == self.plan {
            return Ok(());
        }
        for &w in plan.workers() {
            self.shards
                .entry(w)
                .or_insert_with(|| CrdtValue::bottom(self.kind));
        }
        self.plan = plan;
        self.placement_consistent = self.placement_matches_plan();
        Ok(())
    }

    fn placement_matches_plan(&self) -> bool {
        let Some(col) = self.plan.column() else {
            return true;
        };
        let Ok(idx) = self.column_index(col) else {
            return false;
        };
        self.shards.iter().all(|(w, shard)| {
            shard
                .stored_rows()
                .iter()
                .all(|row| self.plan.route(row.get(idx), 0) == *w)
        })
    }

    fn local_matches(&self, worker: WorkerId, key: &Datum) -> Vec<Row> {
        self.shards.get(&worker).map_or_else(Vec::new, |s| {
            s.live_rows()
                .into_iter()
                .filter(|r| r.get(self.key_column) == Some(key))
                .collect()
        })
    }

    /// Tri-state point lookup on the key column.
    ///
    /// `Dne` is a global claim, so it needs three things: the plan keeps each
    /// key on exactly one worker, every stored row respects that, and the
    /// network is healthy. A non-owner with a healthy network asks the owner.
    /// Anything else that misses is `Idk`.
    pub fn lookup(
        &self,
        key: &Datum,
        at_worker: WorkerId,
        net: &NetworkCondition,
    ) -> Tristate<Vec<Row>> {
        let local = self.local_matches(at_worker, key);
        if !local.is_empty() {
            return Tristate::Value(local);
        }
        let key_local =
            self.placement_consistent && self.plan.partitions_on(&self.schema[self.key_column]);
        if !key_local || !net.is_healthy() {
            return Tristate::Idk;
        }
        let owner = self.plan.route(Some(key), 0);
        if owner == at_worker {
            return Tristate::Dne;
        }
        let remote = self.local_matches(owner, key);
        if remote.is_empty() {
            Tristate::Dne
        } else {
            Tristate::Value(remote)
        }
    }

    /// Live-row counts per distinct `group_by` value over the merged table.
    pub fn group_count(&self, group_by: &str) -> Result<BTreeMap<Datum, u64>, TableError> {
        let idx = self.column_index(group_by)?;
        Ok(count_groups(self.rows().iter(), idx))
    }

    /// The same aggregate computed independently on each shard.
    pub fn local_group_counts(
        &self,
        group_by: &str,
    ) -> Result<BTreeMap<WorkerId, BTreeMap<Datum, u64>>, TableError> {
        let idx = self.column_index(group_by)?;
        Ok(self
            .shards
            .iter()
            .map(|(w, s)| (*w, count_groups(s.live_rows().iter(), idx)))
            .collect())
    }
}

fn count_groups<'a>(rows: impl Iterator<Item = &'a Row>, idx: usize) -> BTreeMap<Datum, u64> {
    let mut out = BTreeMap::new();
    for row in rows {
        if let Some(d) = row.get(idx) {
            *out.entry(d.clone()).or_insert(0) += 1;
        }
    }
    out
}
