//! Merge lattices and the CRDT set family.
//!
//! Every value here is a join-semilattice: it has a least element, a merge
//! that is associative, commutative and idempotent, and the partial order
//! induced by `a <= b  <=>  merge(a, b) == b`. The one documented exception
//! is [`BuddyLSet`], whose merge is guarded on the receiving operand and is
//! therefore not commutative.
//!
//! Base lattices:
//!
//! - [`LMax`]: integer, merge is `max`.
//! - [`LSet`]: finite set, merge is union.
//! - [`LMap`]: map of lattices, merge is pointwise.
//! - [`BuddyLSet`]: a set that stops growing once it reaches a threshold.
//!
//! CRDT sets:
//!
//! - [`GSet`]: grow-only set.
//! - [`TwoPSet`]: positive and negative [`GSet`]s; removal is permanent.
//! - [`LwwSet`]: timestamped two-phase set, last writer wins.
//! - [`MvSet`]: version-vector two-phase set that keeps concurrent writes.
//! - [`TrueSet`]: token/use identified set with add, remove, re-add and
//!   update, all without reading remote state.

mod basic;
mod buddy;
mod clock;
mod custom;
mod dynamic;
mod lww;
mod mv;
mod sets;
mod trueset;

use std::fmt::Debug;

use thiserror::Error;

pub use basic::{LMap, LMax, LSet};
pub use buddy::BuddyLSet;
pub use clock::{LogicalClock, Timestamp, VersionVector};
pub use custom::{CustomLattice, LatticeDef};
pub use dynamic::DynLattice;
pub use lww::LwwSet;
pub use mv::{MvRead, MvSet, MvVersion};
pub use sets::{GSet, TwoPSet};
pub use trueset::{TrueRow, TrueSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("cannot merge {left} with {right}")]
    TypeMismatch {
        left: &'static str,
        right: &'static str,
    },
    #[error("threshold mismatch: {left} vs {right}")]
    ThresholdMismatch { left: usize, right: usize },
    #[error("threshold must be positive")]
    ZeroThreshold,
    #[error("{what} differ between operands")]
    ParamsMismatch { what: &'static str },
    #[error("lattice `{name}` rejected: merge is not idempotent")]
    NotIdempotent { name: String },
    #[error("lattice `{name}` rejected: bottom is not an identity for merge")]
    BadBottom { name: String },
}

/// A join-semilattice value.
///
/// `merge_from` is infallible; operands that carry parameters (a threshold)
/// are checked by [`Lattice::check_compatible`], which [`merge`] calls first.
pub trait Lattice: Clone + PartialEq + Debug + Send + Sync + 'static {
    /// The least element with the same parameters as `self`.
    fn bottom_like(&self) -> Self;

    /// Merges `other` into `self`; returns whether `self` changed.
    fn merge_from(&mut self, other: &Self) -> bool;

    fn check_compatible(&self, _other: &Self) -> Result<(), LatticeError> {
        Ok(())
    }

    fn is_bottom(&self) -> bool {
        *self == self.bottom_like()
    }

    /// `self <= other` in the induced order.
    fn leq(&self, other: &Self) -> bool {
        let mut joined = other.clone();
        joined.merge_from(self);
        joined == *other
    }
}

/// Pure merge of two values of the same lattice.
pub fn merge<L: Lattice>(a: &L, b: &L) -> Result<L, LatticeError> {
    a.check_compatible(b)?;
    let mut out = a.clone();
    out.merge_from(b);
    Ok(out)
}

/// Folds a sequence of values left to right, starting from `seed`.
pub fn fold<'a, L: Lattice>(
    seed: &L,
    values: impl IntoIterator<Item = &'a L>,
) -> Result<L, LatticeError> {
    let mut acc = seed.clone();
    for v in values {
        acc.check_compatible(v)?;
        acc.merge_from(v);
    }
    Ok(acc)
}
