//! The recursive shopping-cart query and its one-shot two-phase-set form.

use std::collections::BTreeSet;

use bloomsim::tables::dataflow::{DataflowGraph, Relations, DEFAULT_PASS_CAP};
use bloomsim::tables::Datum;
use proptest::prelude::*;

const RECURSIVE: &str = "shopping_cart := shopping_cart - bad_items";
const DIRECT: &str = "shopping_cart := added_items - bad_items";

fn items(xs: &BTreeSet<u8>) -> BTreeSet<Datum> {
    xs.iter().map(|x| Datum::Int(i64::from(*x))).collect()
}

#[test]
fn cycles_only_in_the_recursive_form() {
    let rec = DataflowGraph::parse(RECURSIVE).unwrap();
    let direct = DataflowGraph::parse(DIRECT).unwrap();
    assert_eq!(rec.detect_cycles().len(), 1);
    assert!(direct.detect_cycles().is_empty());
    let rw = rec.rewrite_one_shot();
    assert!(rw.graph.detect_cycles().is_empty());
    assert!(rec.evaluate_one_shot(&Relations::new()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn one_shot_equals_fixpoint(
        added in prop::collection::btree_set(0u8..30, 0..20),
        bad in prop::collection::btree_set(0u8..30, 0..10),
    ) {
        let want: BTreeSet<Datum> = items(&added.difference(&bad).copied().collect());

        let rec = DataflowGraph::parse(RECURSIVE).unwrap();
        let fix = rec
            .evaluate_stratified(
                &Relations::from([
                    ("shopping_cart".to_owned(), items(&added)),
                    ("bad_items".to_owned(), items(&bad)),
                ]),
                DEFAULT_PASS_CAP,
            )
            .unwrap();
        prop_assert_eq!(&fix.relations["shopping_cart"], &want);

        let rewritten = rec.rewrite_one_shot().graph;
        let once = rewritten
            .evaluate_one_shot(&Relations::from([
                ("shopping_cart".to_owned(), items(&added)),
                ("bad_items".to_owned(), items(&bad)),
            ]))
            .unwrap();
        prop_assert_eq!(&once.relations["shopping_cart"], &want);

        let direct = DataflowGraph::parse(DIRECT).unwrap();
        let once = direct
            .evaluate_one_shot(&Relations::from([
                ("added_items".to_owned(), items(&added)),
                ("bad_items".to_owned(), items(&bad)),
            ]))
            .unwrap();
        prop_assert_eq!(&once.relations["shopping_cart"], &want);
    }
}
