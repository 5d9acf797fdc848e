use std::fmt;
use std::sync::Arc;

use super::{Lattice, LatticeError};

type MergeFn<T> = dyn Fn(&T, &T) -> T + Send + Sync;

/// A user-defined merge function, validated when it is declared.
///
/// Declaring a lattice checks, over the supplied witness values plus bottom,
/// that merge is idempotent and that bottom is an identity. A merge such as
/// integer addition fails the first check and is rejected up front instead
/// of silently double counting redelivered messages later.
pub struct LatticeDef<T> {
    name: String,
    bottom: T,
    merge: Box<MergeFn<T>>,
}

impl<T> fmt::Debug for LatticeDef<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatticeDef")
            .field("name", &self.name)
            .finish()
    }
}

impl<T> LatticeDef<T>
where
    T: Clone + PartialEq + fmt::Debug + Send + Sync + 'static,
{
    pub fn new(
        name: impl Into<String>,
        bottom: T,
        merge: impl Fn(&T, &T) -> T + Send + Sync + 'static,
        witnesses: &[T],
    ) -> Result<Arc<Self>, LatticeError> {
        let name = name.into();
        let def = Self {
            name: name.clone(),
            bottom,
            merge: Box::new(merge),
        };
        let mut samples = witnesses.to_vec();
        samples.push(def.bottom.clone());
        for x in &samples {
            if (def.merge)(x, x) != *x {
                return Err(LatticeError::NotIdempotent { name });
            }
            if (def.merge)(&def.bottom, x) != *x || (def.merge)(x, &def.bottom) != *x {
                return Err(LatticeError::BadBottom { name });
            }
        }
        Ok(Arc::new(def))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(self: &Arc<Self>, v: T) -> CustomLattice<T> {
        CustomLattice {
            value: v,
            def: Arc::clone(self),
        }
    }

    pub fn bottom(self: &Arc<Self>) -> CustomLattice<T> {
        self.value(self.bottom.clone())
    }
}

/// A value of a lattice declared through [`LatticeDef`].
#[derive(Clone)]
pub struct CustomLattice<T> {
    value: T,
    def: Arc<LatticeDef<T>>,
}

impl<T> CustomLattice<T> {
    pub fn get(&self) -> &T {
        &self.value
    }
}

impl<T: fmt::Debug> fmt::Debug for CustomLattice<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({:?})", self.def.name, self.value)
    }
}

impl<T: PartialEq> PartialEq for CustomLattice<T> {
    fn eq(&self, other: &Self) -> bool {
        self.def.name == other.def.name && self.value == other.value
    }
}

impl<T> Lattice for CustomLattice<T>
where
    T: Clone + PartialEq + fmt::Debug + Send + Sync + 'static,
{
    fn bottom_like(&self) -> Self {
        self.def.bottom()
    }

    fn merge_from(&mut self, other: &Self) -> bool {
        let next = (self.def.merge)(&self.value, &other.value);
        let changed = next != self.value;
        self.value = next;
        changed
    }

    fn check_compatible(&self, other: &Self) -> Result<(), LatticeError> {
        if Arc::ptr_eq(&self.def, &other.def) {
            Ok(())
        } else {
            Err(LatticeError::TypeMismatch {
                left: "custom lattice",
                right: "custom lattice",
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::merge;

    #[test]
    fn sum_is_rejected() {
        let err = LatticeDef::new("sum", 0u64, |a, b| a + b, &[1, 2, 3]).unwrap_err();
        assert_eq!(err, LatticeError::NotIdempotent { name: "sum".into() });
    }

    #[test]
    fn max_is_accepted() {
        let def = LatticeDef::new("max", 0u64, |a: &u64, b: &u64| *a.max(b), &[1, 5, 9]).unwrap();
        let m = merge(&def.value(3), &def.value(8)).unwrap();
        assert_eq!(*m.get(), 8);
        assert!(def.bottom().leq(&m));
    }

    #[test]
    fn bottom_must_be_identity() {
        let err = LatticeDef::new("min", 0u64, |a: &u64, b: &u64| *a.min(b), &[4]).unwrap_err();
        assert_eq!(err, LatticeError::BadBottom { name: "min".into() });
    }
}
