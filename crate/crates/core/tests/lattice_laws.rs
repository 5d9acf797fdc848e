//! Join-semilattice laws over randomly generated values of every lattice.

use bloomsim::lattice::{
    merge, BuddyLSet, GSet, LMap, LMax, LSet, Lattice, LwwSet, MvSet, Timestamp, TrueSet, TwoPSet,
    VersionVector,
};
use bloomsim::sketch::{CmsParams, SketchMatrix};
use proptest::prelude::*;

const CASES: u32 = 1000;

fn check_laws<L: Lattice>(a: &L, b: &L, c: &L) -> Result<(), TestCaseError> {
    let ab = merge(a, b).unwrap();
    let ba = merge(b, a).unwrap();
    prop_assert_eq!(&ab, &ba, "commutative");
    let ab_c = merge(&ab, c).unwrap();
    let a_bc = merge(a, &merge(b, c).unwrap()).unwrap();
    prop_assert_eq!(&ab_c, &a_bc, "associative");
    prop_assert_eq!(&merge(a, a).unwrap(), a, "idempotent");
    prop_assert_eq!(
        &merge(a, &a.bottom_like()).unwrap(),
        a,
        "bottom is identity"
    );
    prop_assert!(a.leq(&ab) && b.leq(&ab), "inflationary");
    prop_assert!(a.bottom_like().is_bottom());
    let mut m = a.clone();
    let changed = m.merge_from(b);
    prop_assert_eq!(changed, &m != a, "merge_from reports change");
    Ok(())
}

fn ts() -> impl Strategy<Value = Timestamp> {
    (0u64..8, 0u32..3).prop_map(|(t, w)| Timestamp::new(t, w))
}

fn lmax() -> impl Strategy<Value = LMax> {
    prop_oneof![Just(LMax::default()), (-50i64..50).prop_map(LMax)]
}

fn lset() -> impl Strategy<Value = LSet<u8>> {
    prop::collection::btree_set(0u8..20, 0..8).prop_map(|s| s.into_iter().collect())
}

fn lmap() -> impl Strategy<Value = LMap<u8, LMax>> {
    prop::collection::vec((0u8..6, -20i64..20), 0..6).prop_map(|kvs| {
        let mut m = LMap::new();
        for (k, v) in kvs {
            m.merge_key(k, &LMax(v));
        }
        m
    })
}

fn nested() -> impl Strategy<Value = LMap<u8, LSet<u8>>> {
    prop::collection::vec((0u8..5, lset()), 0..5).prop_map(|kvs| {
        let mut m = LMap::new();
        for (k, v) in kvs {
            m.merge_key(k, &v);
        }
        m
    })
}

fn gset() -> impl Strategy<Value = GSet<u8>> {
    prop::collection::btree_set(0u8..20, 0..8).prop_map(|s| s.into_iter().collect())
}

fn twopset() -> impl Strategy<Value = TwoPSet<u8>> {
    (gset(), gset()).prop_map(|(p, n)| TwoPSet::from_parts(p, n))
}

fn lwwset() -> impl Strategy<Value = LwwSet<u8>> {
    prop::collection::vec((any::<bool>(), 0u8..6, ts()), 0..8).prop_map(|ops| {
        let mut s = LwwSet::new();
        for (add, x, t) in ops {
            if add {
                s.add(x, t);
            } else {
                s.remove(x, t);
            }
        }
        s
    })
}

fn version() -> impl Strategy<Value = VersionVector> {
    prop::collection::vec((0u32..3, 0u64..3), 0..3).prop_map(|es| {
        let mut vv = VersionVector::new();
        for (w, n) in es {
            for _ in 0..n {
                vv.increment(w);
            }
        }
        vv
    })
}

fn mvset() -> impl Strategy<Value = MvSet<u8>> {
    prop::collection::vec((any::<bool>(), 0u8..5, version()), 0..6).prop_map(|ops| {
        let mut s = MvSet::new();
        for (add, x, v) in ops {
            if add {
                s.add(x, v);
            } else {
                s.remove(x, v);
            }
        }
        s
    })
}

fn trueset() -> impl Strategy<Value = TrueSet<u8, u8>> {
    prop::collection::vec((any::<bool>(), 0u8..5, 0u64..4, ts(), 0u8..4), 0..8).prop_map(|ops| {
        let mut s = TrueSet::new();
        for (ins, tok, use_id, t, v) in ops {
            if ins {
                s.insert(tok, use_id, t, v);
            } else {
                s.delete(tok, t);
            }
        }
        s
    })
}

fn sketch() -> impl Strategy<Value = SketchMatrix> {
    let params = CmsParams::with_base_seed(3, 7, 1).unwrap();
    prop::collection::vec((0u8..10, 0u64..30), 0..10).prop_map(move |xs| {
        let mut sk = SketchMatrix::new(params.clone());
        for (x, t) in xs {
            sk.insert(&x.to_string(), t);
        }
        sk
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn lmax_laws(a in lmax(), b in lmax(), c in lmax()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn lset_laws(a in lset(), b in lset(), c in lset()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn lmap_laws(a in lmap(), b in lmap(), c in lmap()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn nested_lmap_laws(a in nested(), b in nested(), c in nested()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn gset_laws(a in gset(), b in gset(), c in gset()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn twopset_laws(a in twopset(), b in twopset(), c in twopset()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn lwwset_laws(a in lwwset(), b in lwwset(), c in lwwset()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn mvset_laws(a in mvset(), b in mvset(), c in mvset()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn trueset_laws(a in trueset(), b in trueset(), c in trueset()) { check_laws(&a, &b, &c)?; }

    #[test]
    fn sketch_laws(a in sketch(), b in sketch(), c in sketch()) { check_laws(&a, &b, &c)?; }

    /// The guarded set keeps idempotence, inflation on the receiving side,
    /// and commutativity whenever the union stays under the threshold.
    #[test]
    fn buddy_guarded_laws(t in 1usize..6, xs in lset(), ys in lset()) {
        let mk = |s: &LSet<u8>| {
            let mut b = BuddyLSet::new(t).unwrap();
            for &x in s.iter() {
                b.insert(x);
            }
            b
        };
        let (a, b) = (mk(&xs), mk(&ys));
        let ab = merge(&a, &b).unwrap();
        prop_assert_eq!(&merge(&a, &a).unwrap(), &a);
        prop_assert!(a.iter().all(|x| ab.iter().any(|y| y == x)));
        if a.reached() {
            prop_assert_eq!(&ab, &a);
        }
        let union: LSet<u8> = a.iter().chain(b.iter()).copied().collect();
        if union.len() < t {
            prop_assert_eq!(&ab, &merge(&b, &a).unwrap());
            prop_assert_eq!(ab.len(), union.len());
        }
        prop_assert_eq!(ab.reached(), merge(&b, &a).unwrap().reached() || a.reached() || b.reached());
    }

    /// Sketches built from disjoint token sets merge into the sketch of the union.
    #[test]
    fn sketch_mergeability(xs in prop::collection::vec((0u8..12, any::<bool>()), 0..40)) {
        let params = CmsParams::with_base_seed(4, 9, 3).unwrap();
        let (mut a, mut b, mut all) = (
            SketchMatrix::new(params.clone()),
            SketchMatrix::new(params.clone()),
            SketchMatrix::new(params),
        );
        for (t, (x, left)) in xs.into_iter().enumerate() {
            let key = x.to_string();
            if left { a.insert(&key, t as u64); } else { b.insert(&key, t as u64); }
            all.insert(&key, t as u64);
        }
        prop_assert_eq!(merge(&a, &b).unwrap(), all);
    }
}
