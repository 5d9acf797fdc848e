//! The acceptance suite: one PASS or FAIL line per criterion.
//!
//! Runs as a plain binary so the lines are printed even when cargo captures
//! test output. Exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use bloomsim::hash::hash_pair;
use bloomsim::kmer::{
    buddi_kmer_query, guarded_count_run, impl_a_sets, impl_b_run, oracle_count, Corpus, GuardMerge,
    KmerError, KmerRun,
};
use bloomsim::lattice::{
    merge, GSet, LMap, LMax, LSet, Lattice, LwwSet, MvSet, Timestamp, TrueSet, TwoPSet,
    VersionVector,
};
use bloomsim::runtime::{
    DeliverySchedule, Event, EventKind, FaultPlan, NetworkCondition, RuntimeError, WorkerId,
};
use bloomsim::sketch::{choose_params, design1_run, design2_run};
use bloomsim::tables::dataflow::{DataflowGraph, Relations, DEFAULT_PASS_CAP};
use bloomsim::tables::{CrdtKind, Datum, GlobalTable, PartitionPlan, Tristate, Write};
use bloomsim_cli::{main_with_args, verify, RunConfig, Workload};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const LAW_CASES: u32 = 1000;
const LAW_LIMIT: Duration = Duration::from_secs(30);
const CONFLUENCE_SEEDS: u64 = 25;
const CONFLUENCE_LIMIT: Duration = Duration::from_secs(60);
const THRESHOLD_SEEDS: u64 = 10;
const FAILURE_SEEDS: u64 = 10;
const REWRITE_CASES: u32 = 200;
const TRUESET_RANDOM_SEQUENCES: u32 = 1000;
const CMS_INSERTS: usize = 10_000;
const CMS_K: usize = 12;
const CMS_VOCAB: u64 = 50_000;
const CMS_MIN_ITEMS: usize = 5_000;
const CMS_EPS: f64 = 0.01;
const CMS_DELTA: f64 = 0.01;
const CMS_OVERCOUNT_FRACTION: f64 = 0.05;
const CMS_LIMIT: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus_10k.txt")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn laws<L, S>(name: &str, strategy: S) -> Result<(), String>
where
    L: Lattice + Debug,
    S: Strategy<Value = L> + Clone,
{
    let mut runner = TestRunner::new(Config {
        cases: LAW_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(
            &(strategy.clone(), strategy.clone(), strategy),
            |(a, b, c)| {
                let ab = merge(&a, &b).unwrap();
                prop_assert_eq!(&ab, &merge(&b, &a).unwrap(), "commutative");
                prop_assert_eq!(
                    merge(&ab, &c).unwrap(),
                    merge(&a, &merge(&b, &c).unwrap()).unwrap(),
                    "associative"
                );
                prop_assert_eq!(&merge(&a, &a).unwrap(), &a, "idempotent");
                prop_assert_eq!(&merge(&a, &a.bottom_like()).unwrap(), &a, "bottom");
                prop_assert!(a.leq(&ab) && b.leq(&ab), "inflationary");
                Ok(())
            },
        )
        .map_err(|e| format!("{name}: {e}"))
}

fn ts() -> impl Strategy<Value = Timestamp> + Clone {
    (0u64..8, 0u32..3).prop_map(|(t, w)| Timestamp::new(t, w))
}

fn small_set() -> impl Strategy<Value = BTreeSet<u8>> + Clone {
    prop::collection::btree_set(0u8..20, 0..8)
}

fn version() -> impl Strategy<Value = VersionVector> + Clone {
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

fn lattice_laws() -> Outcome {
    let start = Instant::now();
    laws(
        "LMax",
        prop_oneof![Just(LMax::default()), (-50i64..50).prop_map(LMax)],
    )?;
    laws(
        "LSet",
        small_set().prop_map(|s| s.into_iter().collect::<LSet<u8>>()),
    )?;
    laws(
        "LMap",
        prop::collection::vec((0u8..6, -20i64..20), 0..6).prop_map(|kvs| {
            let mut m = LMap::new();
            for (k, v) in kvs {
                m.merge_key(k, &LMax(v));
            }
            m
        }),
    )?;
    laws(
        "GSet",
        small_set().prop_map(|s| s.into_iter().collect::<GSet<u8>>()),
    )?;
    laws(
        "TwoPSet",
        (small_set(), small_set()).prop_map(|(p, n)| {
            TwoPSet::from_parts(p.into_iter().collect(), n.into_iter().collect())
        }),
    )?;
    laws(
        "LwwSet",
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
        }),
    )?;
    laws(
        "MvSet",
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
        }),
    )?;
    laws(
        "TrueSet",
        prop::collection::vec((any::<bool>(), 0u8..5, 0u64..4, ts(), 0u8..4), 0..8).prop_map(
            |ops| {
                let mut s = TrueSet::new();
                for (ins, tok, use_id, t, v) in ops {
                    if ins {
                        s.insert(tok, use_id, t, v);
                    } else {
                        s.delete(tok, t);
                    }
                }
                s
            },
        ),
    )?;
    let took = start.elapsed();
    ensure!(took < LAW_LIMIT, "took {took:?}, limit {LAW_LIMIT:?}");
    Ok(format!("8 lattices x {LAW_CASES} cases in {took:.1?}"))
}

// ---------------------------------------------------------------- 2

fn confluence() -> Outcome {
    let start = Instant::now();
    let cfg = RunConfig {
        workload: Workload::KmerA,
        input: Some(fixture()),
        workers: 4,
        duplicate_prob: 0.3,
        reorder_window: 5,
        drop_prob: 0.1,
        ..RunConfig::default()
    };
    let seeds: Vec<u64> = (1..=CONFLUENCE_SEEDS).collect();
    let summary = verify(&cfg, &seeds, 4).map_err(err)?;
    let took = start.elapsed();
    ensure!(
        summary.identical(),
        "histograms differ across seeds: {:?}",
        summary.diverging
    );
    ensure!(
        summary.all_match(),
        "seeds off the oracle: {:?}",
        summary.mismatching
    );
    ensure!(
        took < CONFLUENCE_LIMIT,
        "took {took:?}, limit {CONFLUENCE_LIMIT:?}"
    );
    Ok(format!(
        "{CONFLUENCE_SEEDS} identical histograms equal to the oracle in {took:.1?}"
    ))
}

// ---------------------------------------------------------------- 3

fn atag() -> Outcome {
    let corpus = Corpus::parse("ATAGATAG").map_err(err)?;
    let cfg = KmerRun::new(4, 3, DeliverySchedule::adversarial(1, 0.3, 4, 0.1));
    let (out, ids) = impl_a_sets(&corpus, &cfg).map_err(err)?;
    ensure!(
        out.histogram.get("ATAG") == 2,
        "ATAG count {}",
        out.histogram.get("ATAG")
    );
    let stored = ids
        .get(&"ATAG".to_owned())
        .map(|s| s.iter().copied().collect::<Vec<_>>());
    ensure!(stored == Some(vec![0, 4]), "ATAG ids {stored:?}");
    Ok("ATAG=2 with ids {0, 4}".into())
}

// ---------------------------------------------------------------- 4

fn threshold_semantics() -> Outcome {
    let truth: [(&str, u64); 5] = [
        ("ACGT", 1),
        ("CATG", 2),
        ("GATC", 3),
        ("TTAG", 10),
        ("CCGA", 100),
    ];
    // one k-mer per line, so each line holds exactly one window
    let mut text = String::new();
    for &(kmer, n) in &truth {
        for _ in 0..n {
            text.push_str(kmer);
            text.push('\n');
        }
    }
    let corpus = Corpus::parse(&text).map_err(err)?;
    let threshold = 3u64;
    for seed in 1..=THRESHOLD_SEEDS {
        let cfg =
            KmerRun::new(4, 4, DeliverySchedule::adversarial(seed, 0.3, 5, 0.1)).with_batch(8);
        let got = impl_b_run(&corpus, &cfg, threshold as usize)
            .map_err(err)?
            .outcome
            .histogram;
        for &(kmer, n) in &truth {
            let c = got.get(kmer);
            if n < threshold {
                ensure!(c == n, "seed {seed}: {kmer} reported {c}, true {n}");
            }
            ensure!(
                (c >= threshold) == (n >= threshold),
                "seed {seed}: {kmer} reported {c}, true {n}"
            );
        }
    }
    Ok(format!(
        "exact below 3 and count>=3 correct for 5 k-mers over {THRESHOLD_SEEDS} seeds"
    ))
}

// ---------------------------------------------------------------- 5

fn stratification() -> Outcome {
    let corpus = Corpus::load(fixture()).map_err(err)?;
    let cfg = KmerRun::new(4, 4, DeliverySchedule::adversarial(2, 0.3, 5, 0.1));
    let truth = oracle_count(&corpus, 4);
    match guarded_count_run(&corpus, &cfg, 3, GuardMerge::Instant) {
        Err(KmerError::Runtime(RuntimeError::Stratification(_))) => {}
        other => return Err(format!("instant merge was not rejected: {other:?}")),
    }
    let cap = truth.counts.values().max().copied().unwrap_or(0) as usize + 1;
    let out = guarded_count_run(&corpus, &cfg, cap, GuardMerge::Deferred).map_err(err)?;
    ensure!(
        out.histogram == truth,
        "deferred merge differs from the oracle"
    );
    Ok(format!(
        "instant rejected; deferred equals the oracle in {} ticks",
        out.stats.ticks
    ))
}

// ---------------------------------------------------------------- 6

fn one_shot() -> Outcome {
    let recursive =
        DataflowGraph::parse("shopping_cart := shopping_cart - bad_items").map_err(err)?;
    let rewritten = recursive.rewrite_one_shot().graph;
    ensure!(
        !recursive.detect_cycles().is_empty(),
        "no cycle found in the recursive form"
    );
    ensure!(
        rewritten.detect_cycles().is_empty(),
        "cycle left in the rewritten form"
    );
    let items = |xs: &BTreeSet<u8>| -> BTreeSet<Datum> {
        xs.iter().map(|x| Datum::Int(i64::from(*x))).collect()
    };
    let mut runner = TestRunner::new(Config {
        cases: REWRITE_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let sets = (
        prop::collection::btree_set(0u8..30, 0..20),
        prop::collection::btree_set(0u8..30, 0..10),
    );
    runner
        .run(&sets, |(added, bad)| {
            let inputs: Relations = BTreeMap::from([
                ("shopping_cart".to_owned(), items(&added)),
                ("bad_items".to_owned(), items(&bad)),
            ]);
            let fix = recursive
                .evaluate_stratified(&inputs, DEFAULT_PASS_CAP)
                .unwrap();
            let once = rewritten.evaluate_one_shot(&inputs).unwrap();
            prop_assert_eq!(
                &once.relations["shopping_cart"],
                &fix.relations["shopping_cart"]
            );
            Ok(())
        })
        .map_err(err)?;
    Ok(format!(
        "{REWRITE_CASES} instances agree; cycle only in the recursive form"
    ))
}

// ---------------------------------------------------------------- 7

fn kind_tokens(
    log: &[Event],
    kind: EventKind,
    w: Option<WorkerId>,
    before: Option<u64>,
) -> BTreeSet<u64> {
    log.iter()
        .filter(|e| e.kind == kind)
        .filter(|e| w.is_none() || e.dst == w)
        .filter(|e| before.is_none_or(|t| e.tick < t))
        .filter_map(|e| e.token_id)
        .collect()
}

fn exactly_once_under_failure() -> Outcome {
    let corpus = Corpus::load(fixture()).map_err(err)?;
    let truth = oracle_count(&corpus, 4);
    let victim = WorkerId(1);
    let mut reissued = 0;
    for seed in 1..=FAILURE_SEEDS {
        let schedule = DeliverySchedule::adversarial(seed, 0.5, 5, 0.0);
        let healthy =
            buddi_kmer_query(&corpus, &KmerRun::new(4, 4, schedule.clone())).map_err(err)?;
        let last = healthy
            .outcome
            .log
            .of_kind(EventKind::Complete)
            .map(|e| e.tick)
            .max()
            .unwrap_or(0);
        let fail_at = last / 2;
        let cfg = KmerRun::new(4, 4, schedule).with_faults(FaultPlan {
            fails: vec![(fail_at, victim)],
            ..FaultPlan::default()
        });
        let out = buddi_kmer_query(&corpus, &cfg).map_err(err)?;
        ensure!(
            out.outcome.histogram == truth,
            "seed {seed}: histogram differs from the oracle"
        );
        let log = out.outcome.log.events();
        let mut held = kind_tokens(log, EventKind::Assign, Some(victim), Some(fail_at));
        held.extend(kind_tokens(
            log,
            EventKind::Reassign,
            Some(victim),
            Some(fail_at),
        ));
        let done = kind_tokens(log, EventKind::Complete, Some(victim), Some(fail_at));
        let unfinished: BTreeSet<u64> = held.difference(&done).copied().collect();
        let reassigned = kind_tokens(log, EventKind::Reassign, None, None);
        ensure!(
            !unfinished.is_empty(),
            "seed {seed}: worker 1 held no chunk at tick {fail_at}"
        );
        ensure!(
            unfinished.is_subset(&reassigned),
            "seed {seed}: unfinished {unfinished:?} not all reassigned"
        );
        ensure!(
            done.is_disjoint(&reassigned),
            "seed {seed}: completed chunks reassigned: {:?}",
            done.intersection(&reassigned).collect::<Vec<_>>()
        );
        reissued += unfinished.len();
    }
    Ok(format!(
        "{FAILURE_SEEDS} seeds match; {reissued} unfinished chunks reissued, none completed"
    ))
}

// ---------------------------------------------------------------- 8

#[derive(Debug, Clone, Copy)]
enum Op {
    Put {
        token: u8,
        use_id: u64,
        ts: Timestamp,
        value: u8,
    },
    Delete {
        token: u8,
        ts: Timestamp,
    },
}

impl Op {
    fn ts(&self) -> Timestamp {
        match self {
            Op::Put { ts, .. } | Op::Delete { ts, .. } => *ts,
        }
    }

    fn envelope(&self) -> TrueSet<u8, u8> {
        let mut s = TrueSet::new();
        match *self {
            Op::Put {
                token,
                use_id,
                ts,
                value,
            } => {
                s.insert(token, use_id, ts, value);
            }
            Op::Delete { token, ts } => {
                s.delete(token, ts);
            }
        }
        s
    }
}

fn replay(ops: &[Op]) -> BTreeMap<u8, u8> {
    let mut sorted = ops.to_vec();
    sorted.sort_by_key(Op::ts);
    let mut m = BTreeMap::new();
    for op in sorted {
        match op {
            Op::Put { token, value, .. } => {
                m.insert(token, value);
            }
            Op::Delete { token, .. } => {
                m.remove(&token);
            }
        }
    }
    m
}

fn deliver(order: impl IntoIterator<Item = usize>, ops: &[Op]) -> BTreeMap<u8, u8> {
    let mut replica = TrueSet::new();
    for i in order {
        replica.merge_from(&ops[i].envelope());
    }
    replica.read()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for at in 0..=p.len() {
            let mut q = p.clone();
            q.insert(at, n - 1);
            out.push(q);
        }
    }
    out
}

fn random_ops(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec((any::<bool>(), 0u8..4, 0u32..3, 0u8..50), len).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (put, token, worker, value))| {
                let ts = Timestamp::new(i as u64 + 1, worker);
                if put {
                    Op::Put {
                        token,
                        use_id: 1000 + i as u64,
                        ts,
                        value,
                    }
                } else {
                    Op::Delete { token, ts }
                }
            })
            .collect()
    })
}

fn trueset_convergence() -> Outcome {
    let t = Timestamp::new;
    let fixed = [
        Op::Put {
            token: 1,
            use_id: 10,
            ts: t(1, 0),
            value: 5,
        },
        Op::Delete {
            token: 1,
            ts: t(2, 1),
        },
        Op::Put {
            token: 1,
            use_id: 11,
            ts: t(3, 0),
            value: 6,
        },
        Op::Delete {
            token: 1,
            ts: t(4, 2),
        },
        Op::Put {
            token: 1,
            use_id: 12,
            ts: t(5, 1),
            value: 7,
        },
    ];
    let orders = permutations(5);
    ensure!(orders.len() == 120, "{} orders", orders.len());
    let want = replay(&fixed);
    ensure!(want == BTreeMap::from([(1, 7)]), "replay gave {want:?}");
    for order in &orders {
        let got = deliver(order.iter().copied(), &fixed);
        ensure!(got == want, "order {order:?} read {got:?}");
    }

    let mut five = TestRunner::new(Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    });
    five.run(&random_ops(5..6), |ops| {
        let want = replay(&ops);
        for order in &orders {
            prop_assert_eq!(deliver(order.iter().copied(), &ops), want.clone());
        }
        Ok(())
    })
    .map_err(err)?;

    let mut long = TestRunner::new(Config {
        cases: TRUESET_RANDOM_SEQUENCES,
        failure_persistence: None,
        ..Config::default()
    });
    let input = (random_ops(6..40), prop::collection::vec(any::<u32>(), 80));
    long.run(&input, |(ops, keys)| {
        let mut keyed: Vec<(u32, usize)> = (0..ops.len())
            .chain(0..ops.len())
            .enumerate()
            .map(|(pos, i)| (keys[pos], i))
            .collect();
        keyed.sort_unstable();
        prop_assert_eq!(
            deliver(keyed.into_iter().map(|(_, i)| i), &ops),
            replay(&ops)
        );
        Ok(())
    })
    .map_err(err)?;
    Ok(format!(
        "120 orders x 101 sequences; {TRUESET_RANDOM_SEQUENCES} longer sequences match replay"
    ))
}

// ---------------------------------------------------------------- 9

fn dne_idk() -> Outcome {
    let workers: Vec<WorkerId> = (0..3).map(WorkerId).collect();
    let plan = PartitionPlan::hash("key", workers.clone()).map_err(err)?;
    let mut t = GlobalTable::new("t", CrdtKind::GSet, &["key", "val"], plan).map_err(err)?;
    let row = vec![Datum::text("present"), Datum::Int(1)];
    let owner = t.apply(Write::Insert(row.clone())).map_err(err)?;
    let absent = Datum::text("absent");
    let asker = workers
        .iter()
        .copied()
        .find(|&w| w != t.plan().owner_of(&absent).unwrap())
        .unwrap();
    let healthy = NetworkCondition::Healthy;
    let cut = NetworkCondition::partitioned([(WorkerId(0), WorkerId(2))]);

    let got = t.lookup(&absent, asker, &healthy);
    ensure!(got == Tristate::Dne, "absent key, healthy: {got:?}");
    let got = t.lookup(&absent, asker, &cut);
    ensure!(got == Tristate::Idk, "absent key, partitioned: {got:?}");
    for w in &workers {
        let got = t.lookup(&Datum::text("present"), *w, &healthy);
        ensure!(
            got == Tristate::Value(vec![row.clone()]),
            "present key at {w:?}: {got:?}"
        );
    }
    let got = t.lookup(&Datum::text("present"), owner, &cut);
    ensure!(
        got == Tristate::Value(vec![row]),
        "present key at its owner, partitioned: {got:?}"
    );
    Ok("DNE, IDK and Value as expected".into())
}

// ---------------------------------------------------------------- 10

/// `CMS_INSERTS` k-mers, one per line. Each is drawn from a vocabulary of
/// `CMS_VOCAB` at the product of two uniform ranks, which skews the stream
/// towards a few heavy hitters while leaving a long tail.
fn cms_corpus() -> Corpus {
    let vocab: Vec<String> = (0..CMS_VOCAB)
        .map(|i| {
            (0..CMS_K as u64)
                .map(|j| b"ACGT"[(hash_pair(i, j) % 4) as usize] as char)
                .collect()
        })
        .collect();
    let mut text = String::new();
    for i in 0..CMS_INSERTS as u64 {
        let r = hash_pair(0x5eed, i);
        let a = (r & 0xffff_ffff) % CMS_VOCAB;
        let b = (r >> 32) % CMS_VOCAB;
        text.push_str(&vocab[(a * b / CMS_VOCAB) as usize]);
        text.push('\n');
    }
    Corpus::parse(&text).expect("generated corpus is valid")
}

fn cms() -> Outcome {
    let start = Instant::now();
    let corpus = cms_corpus();
    let truth = oracle_count(&corpus, CMS_K);
    ensure!(
        truth.total() == CMS_INSERTS as u64,
        "stream has {} inserts",
        truth.total()
    );
    ensure!(
        truth.len() >= CMS_MIN_ITEMS,
        "only {} distinct items to query",
        truth.len()
    );
    let params = choose_params(CMS_EPS, CMS_DELTA).map_err(err)?;
    let cfg = KmerRun::new(CMS_K, 4, DeliverySchedule::adversarial(10, 0.3, 5, 0.1)).with_batch(64);
    let mut d1 = design1_run(&corpus, &cfg, &params).map_err(err)?;
    let d2 = design2_run(&corpus, &cfg, &params).map_err(err)?;
    ensure!(d2.converged(), "design 2 replicas did not converge");
    let slack = CMS_EPS * CMS_INSERTS as f64;
    let mut over = 0usize;
    for (item, &n) in &truth.counts {
        let Tristate::Value(a) = d1.query(item, WorkerId(0), &NetworkCondition::Healthy) else {
            return Err(format!("design 1 gave no value for {item}"));
        };
        let b = d2
            .query(item, WorkerId(0))
            .ok_or("design 2 has no replica at worker 0")?;
        ensure!(a == b, "{item}: design 1 says {a}, design 2 says {b}");
        ensure!(a >= n, "{item}: estimate {a} below true {n}");
        if (a - n) as f64 > slack {
            over += 1;
        }
    }
    let frac = over as f64 / truth.len() as f64;
    let took = start.elapsed();
    ensure!(
        frac <= CMS_OVERCOUNT_FRACTION,
        "{over} of {} items overcounted by > {slack}",
        truth.len()
    );
    ensure!(took < CMS_LIMIT, "took {took:?}, limit {CMS_LIMIT:?}");
    Ok(format!(
        "h={} m={}; {} items, {over} overcounted by > {slack} ({frac:.3}); {took:.1?}",
        params.h(),
        params.m(),
        truth.len()
    ))
}

// ---------------------------------------------------------------- 11

fn compile_time_coordination() -> Outcome {
    let corpus = Corpus::load(fixture()).map_err(err)?;
    let cfg = KmerRun::new(4, 4, DeliverySchedule::adversarial(3, 0.3, 5, 0.1));
    let mut out = buddi_kmer_query(&corpus, &cfg).map_err(err)?;
    ensure!(
        out.outcome.histogram == oracle_count(&corpus, 4),
        "histogram differs from the oracle"
    );
    ensure!(
        out.coordination_free,
        "hash(seq) plan reported as needing coordination"
    );
    ensure!(
        out.aggregate_messages == 0,
        "{} cross-worker messages while aggregating",
        out.aggregate_messages
    );
    let owners = out.table.plan().workers().to_vec();
    out.table
        .switch_partitioning(PartitionPlan::round_robin(owners).map_err(err)?)
        .map_err(err)?;
    let after = out.table.plan_query("seq").map_err(err)?;
    ensure!(
        !after.coordination_free,
        "round robin still reported coordination-free"
    );
    Ok("hash(seq): free with 0 aggregation messages; round robin: not free".into())
}

// ---------------------------------------------------------------- 12

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let input = fixture();
    let mut checked = Vec::new();
    for workload in ["kmer_a", "buddi_kmer", "cms_design1"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let report = dir.path().join(format!("{workload}-{run}.json"));
            let events = dir.path().join(format!("{workload}-{run}.log"));
            let args = [
                "bloomsim",
                "run",
                "--workload",
                workload,
                "--input",
                input.to_str().unwrap(),
                "--seed",
                "42",
                "--dup-prob",
                "0.3",
                "--reorder-window",
                "5",
                "--drop-prob",
                "0.1",
                "--fail",
                "40:2",
                "--partition",
                "10:0-1",
                "--partition",
                "30:",
                "--report",
                report.to_str().unwrap(),
                "--emit-events",
                events.to_str().unwrap(),
            ];
            let code = main_with_args(args, &mut Vec::new(), &mut Vec::new());
            ensure!(code == 0, "{workload} run {run} exited {code}");
            outputs.push((
                std::fs::read(&report).map_err(err)?,
                std::fs::read(&events).map_err(err)?,
            ));
        }
        ensure!(outputs[0].0 == outputs[1].0, "{workload}: reports differ");
        ensure!(
            outputs[0].1 == outputs[1].1,
            "{workload}: event logs differ"
        );
        checked.push(workload);
    }
    Ok(format!(
        "byte-identical reports and logs for {}",
        checked.join(", ")
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("lattice laws", lattice_laws),
        ("confluence of kmer_a over 25 seeds", confluence),
        ("ATAG example", atag),
        ("threshold semantics", threshold_semantics),
        ("stratification pitfall", stratification),
        ("one-shot rewrite equivalence", one_shot),
        ("exactly-once under failure", exactly_once_under_failure),
        ("True-Set convergence", trueset_convergence),
        ("DNE and IDK lookups", dne_idk),
        ("count-min one-sided error and design agreement", cms),
        ("compile-time coordination", compile_time_coordination),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{took:.1?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} [{took:.1?}]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
