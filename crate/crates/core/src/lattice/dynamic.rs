use std::any::{type_name, Any};
use std::fmt::Debug;

use super::{Lattice, LatticeError};

/// Object-safe view of a [`Lattice`], so collections of different lattice
/// types can live side by side (one per table in a worker's program).
pub trait DynLattice: Debug + Send + Sync {
    fn merge_dyn(&mut self, other: &dyn DynLattice) -> Result<bool, LatticeError>;
    fn clone_box(&self) -> Box<dyn DynLattice>;
    fn bottom_box(&self) -> Box<dyn DynLattice>;
    fn eq_dyn(&self, other: &dyn DynLattice) -> bool;
    fn is_bottom_dyn(&self) -> bool;
    fn type_name(&self) -> &'static str;
    fn as_any(&self) -> &dyn Any;
}

impl<L: Lattice> DynLattice for L {
    fn merge_dyn(&mut self, other: &dyn DynLattice) -> Result<bool, LatticeError> {
        let Some(other) = other.as_any().downcast_ref::<L>() else {
            return Err(LatticeError::TypeMismatch {
                left: type_name::<L>(),
                right: other.type_name(),
            });
        };
        self.check_compatible(other)?;
        Ok(self.merge_from(other))
    }

    fn clone_box(&self) -> Box<dyn DynLattice> {
        Box::new(self.clone())
    }

    fn bottom_box(&self) -> Box<dyn DynLattice> {
        Box::new(self.bottom_like())
    }

    fn eq_dyn(&self, other: &dyn DynLattice) -> bool {
        other.as_any().downcast_ref::<L>() == Some(self)
    }

    fn is_bottom_dyn(&self) -> bool {
        self.is_bottom()
    }

    fn type_name(&self) -> &'static str {
        type_name::<L>()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

impl Clone for Box<dyn DynLattice> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

impl dyn DynLattice + '_ {
    pub fn downcast_ref<L: Lattice>(&self) -> Option<&L> {
        self.as_any().downcast_ref::<L>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{GSet, LMax};

    #[test]
    fn mismatched_types_do_not_merge() {
        let mut a: Box<dyn DynLattice> = Box::new(LMax(1));
        let b: Box<dyn DynLattice> = Box::new(GSet::<u8>::new());
        assert!(matches!(
            a.merge_dyn(b.as_ref()),
            Err(LatticeError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn same_types_merge() {
        let mut a: Box<dyn DynLattice> = Box::new(LMax(1));
        let b: Box<dyn DynLattice> = Box::new(LMax(4));
        assert!(a.merge_dyn(b.as_ref()).unwrap());
        assert_eq!(a.downcast_ref::<LMax>(), Some(&LMax(4)));
        assert!(a.eq_dyn(b.as_ref()));
    }
}
