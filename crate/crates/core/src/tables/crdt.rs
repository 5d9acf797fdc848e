use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Datum, Row, TableError};
use crate::lattice::{
    GSet, Lattice, LatticeError, LwwSet, MvSet, Timestamp, TrueSet, TwoPSet, VersionVector,
};

/// The CRDT a global table is declared with. Fixed at creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CrdtKind {
    GSet,
    TwoPSet,
    LwwSet,
    MvSet,
    TrueSet,
}

impl CrdtKind {
    pub fn name(self) -> &'static str {
        match self {
            CrdtKind::GSet => "g-set",
            CrdtKind::TwoPSet => "2p-set",
            CrdtKind::LwwSet => "lww-set",
            CrdtKind::MvSet => "mv-set",
            CrdtKind::TrueSet => "true-set",
        }
    }
}

/// A write against a global table. Which variants are legal depends on the
/// table's [`CrdtKind`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Write {
    /// G-Set or 2P-Set insert.
    Insert(Row),
    /// 2P-Set removal (tombstone).
    Remove(Row),
    InsertAt(Row, Timestamp),
    RemoveAt(Row, Timestamp),
    InsertVersion(Row, VersionVector),
    RemoveVersion(Row, VersionVector),
    /// True-Set insert or update; the token is the row's key column.
    Put {
        row: Row,
        use_id: u64,
        ts: Timestamp,
    },
    /// True-Set delete by key.
    Delete {
        key: Datum,
        ts: Timestamp,
    },
}

impl Write {
    pub fn row(&self) -> Option<&Row> {
        match self {
            Write::Insert(r)
            | Write::Remove(r)
            | Write::InsertAt(r, _)
            | Write::RemoveAt(r, _)
            | Write::InsertVersion(r, _)
            | Write::RemoveVersion(r, _)
            | Write::Put { row: r, .. } => Some(r),
            Write::Delete { .. } => None,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Write::Insert(_) => "insert",
            Write::Remove(_) => "remove",
            Write::InsertAt(..) => "timestamped insert",
            Write::RemoveAt(..) => "timestamped remove",
            Write::InsertVersion(..) => "versioned insert",
            Write::RemoveVersion(..) => "versioned remove",
            Write::Put { .. } => "put",
            Write::Delete { .. } => "delete",
        }
    }
}

/// A shard of a global table: one CRDT over rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CrdtValue {
    GSet(GSet<Row>),
    TwoPSet(TwoPSet<Row>),
    LwwSet(LwwSet<Row>),
    MvSet(MvSet<Row>),
    TrueSet(TrueSet<Datum, Row>),
}

impl CrdtValue {
    pub fn bottom(kind: CrdtKind) -> Self {
        match kind {
            CrdtKind::GSet => CrdtValue::GSet(GSet::new()),
            CrdtKind::TwoPSet => CrdtValue::TwoPSet(TwoPSet::new()),
            CrdtKind::LwwSet => CrdtValue::LwwSet(LwwSet::new()),
            CrdtKind::MvSet => CrdtValue::MvSet(MvSet::new()),
            CrdtKind::TrueSet => CrdtValue::TrueSet(TrueSet::new()),
        }
    }

    pub fn kind(&self) -> CrdtKind {
        match self {
            CrdtValue::GSet(_) => CrdtKind::GSet,
            CrdtValue::TwoPSet(_) => CrdtKind::TwoPSet,
            CrdtValue::LwwSet(_) => CrdtKind::LwwSet,
            CrdtValue::MvSet(_) => CrdtKind::MvSet,
            CrdtValue::TrueSet(_) => CrdtKind::TrueSet,
        }
    }

    pub(crate) fn apply(&mut self, write: Write, key_column: usize) -> Result<(), TableError> {
        let wrong = TableError::WrongWrite {
            write: write.name(),
            kind: self.kind(),
        };
        match (self, write) {
            (CrdtValue::GSet(s), Write::Insert(r)) => {
                s.insert(r);
            }
            (CrdtValue::TwoPSet(s), Write::Insert(r)) => {
                s.insert(r);
            }
            (CrdtValue::TwoPSet(s), Write::Remove(r)) => {
                s.remove(r);
            }
            (CrdtValue::LwwSet(s), Write::InsertAt(r, ts)) => {
                s.add(r, ts);
            }
            (CrdtValue::LwwSet(s), Write::RemoveAt(r, ts)) => {
                s.remove(r, ts);
            }
            (CrdtValue::MvSet(s), Write::InsertVersion(r, v)) => {
                s.add(r, v);
            }
            (CrdtValue::MvSet(s), Write::RemoveVersion(r, v)) => {
                s.remove(r, v);
            }
            (CrdtValue::TrueSet(s), Write::Put { row, use_id, ts }) => {
                let token = row.get(key_column).cloned().ok_or(TableError::Arity {
                    got: row.len(),
                    want: key_column + 1,
                })?;
                s.insert(token, use_id, ts, row);
            }
            (CrdtValue::TrueSet(s), Write::Delete { key, ts }) => {
                s.delete(key, ts);
            }
            _ => return Err(wrong),
        }
        Ok(())
    }

    /// Rows currently visible in this value.
    pub fn live_rows(&self) -> BTreeSet<Row> {
        match self {
            CrdtValue::GSet(s) => s.as_set().clone(),
            CrdtValue::TwoPSet(s) => s.read(),
            CrdtValue::LwwSet(s) => s.members(),
            CrdtValue::MvSet(s) => s.members(),
            CrdtValue::TrueSet(s) => s.read().into_values().collect(),
        }
    }

    /// Every row ever written here, including removed ones.
    pub(crate) fn stored_rows(&self) -> BTreeSet<Row> {
        match self {
            CrdtValue::GSet(s) => s.as_set().clone(),
            CrdtValue::TwoPSet(s) => s.pos().iter().chain(s.neg().iter()).cloned().collect(),
            CrdtValue::LwwSet(s) => s.elements(),
            CrdtValue::MvSet(s) => s.elements(),
            CrdtValue::TrueSet(s) => s.rows().map(|r| r.payload.clone()).collect(),
        }
    }
}

impl Lattice for CrdtValue {
    fn bottom_like(&self) -> Self {
        CrdtValue::bottom(self.kind())
    }

    /// Values of different kinds are left untouched; see `check_compatible`.
    fn merge_from(&mut self, other: &Self) -> bool {
        match (self, other) {
            (CrdtValue::GSet(a), CrdtValue::GSet(b)) => a.merge_from(b),
            (CrdtValue::TwoPSet(a), CrdtValue::TwoPSet(b)) => a.merge_from(b),
            (CrdtValue::LwwSet(a), CrdtValue::LwwSet(b)) => a.merge_from(b),
            (CrdtValue::MvSet(a), CrdtValue::MvSet(b)) => a.merge_from(b),
            (CrdtValue::TrueSet(a), CrdtValue::TrueSet(b)) => a.merge_from(b),
            _ => false,
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<(), LatticeError> {
        if self.kind() == other.kind() {
            Ok(())
        } else {
            Err(LatticeError::TypeMismatch {
                left: self.kind().name(),
                right: other.kind().name(),
            })
        }
    }
}
