use std::collections::BTreeMap;

use crate::hash::owner_index;
use crate::lattice::{BuddyLSet, GSet, LMap, LSet, Lattice};
use crate::runtime::{
    EventKind, EventLog, Outgoing, Program, RouteCtx, RunStats, Simulation, WorkerId,
};
use crate::tables::{
    CrdtKind, CrdtValue, Datum, EdgeKind, GlobalTable, PartitionPlan, Row, TableError, Tristate,
};

use super::ingest::{IngestDriver, KmerRun};
use super::{Corpus, KmerError, KmerHistogram};

type KmerBatch = LMap<String, LSet<u64>>;

/// What every k-mer workload reports besides its result.
#[derive(Debug, Clone)]
pub struct KmerOutcome {
    pub histogram: KmerHistogram,
    pub stats: RunStats,
    pub log: EventLog,
    /// Histogram after each tick, when requested.
    pub partials: Vec<(u64, KmerHistogram)>,
    /// No k-mer key is stored on two owners.
    pub disjoint: bool,
    /// Instance ids held across all owner shards.
    pub stored_ids: u64,
    pub id_collisions: u64,
}

/// Implementation B outcome with per-k-mer stored ids.
#[derive(Debug, Clone)]
pub struct ThresholdOutcome {
    pub outcome: KmerOutcome,
    pub threshold: usize,
}

#[derive(Debug, Clone)]
pub struct BuddiOutcome {
    pub outcome: KmerOutcome,
    pub table: GlobalTable,
    pub coordination_free: bool,
    /// Cross-worker messages logged while aggregating.
    pub aggregate_messages: usize,
}

fn owner_of(ctx: &RouteCtx<'_>, kmer: &str) -> WorkerId {
    ctx.owners[owner_index(kmer, ctx.owners.len())]
}

/// One envelope per k-mer instance, to the k-mer's owner.
fn route_instances<L: Lattice>(
    ctx: &RouteCtx<'_>,
    batch: &KmerBatch,
    wrap: impl Fn(&str, u64) -> L,
) -> Vec<Outgoing> {
    let mut out = Vec::new();
    for (kmer, tokens) in batch.iter() {
        let dst = owner_of(ctx, kmer);
        for &t in tokens.iter() {
            out.push(Outgoing {
                dst,
                token_id: t,
                payload: Box::new(wrap(kmer, t)),
            });
        }
    }
    out
}

fn run(
    corpus: &Corpus,
    cfg: &KmerRun,
    program: Program,
    read: impl Fn(&Simulation) -> KmerHistogram,
) -> Result<(Simulation, KmerOutcome), KmerError> {
    let pool = cfg.pool(corpus)?;
    let mut sim = Simulation::new(program, cfg.workers, cfg.schedule.clone())?
        .with_faults(cfg.faults.clone())
        .with_tick_cap(cfg.tick_cap);
    let mut driver = IngestDriver::new(pool, cfg, "out");
    let mut partials = Vec::new();
    let stats = sim.run_observed(&mut driver, |s| {
        if cfg.partials {
            partials.push((s.tick(), read(s)));
        }
    })?;
    let outcome = KmerOutcome {
        histogram: read(&sim),
        stats,
        log: sim.log().clone(),
        partials,
        disjoint: true,
        stored_ids: 0,
        id_collisions: sim.id_collisions(),
    };
    Ok((sim, outcome))
}

/// Histogram, disjointness and stored-id count over a per-owner map table.
fn read_sets<V: Lattice>(
    sim: &Simulation,
    table: &str,
    k: usize,
    size: fn(&V) -> usize,
) -> (KmerHistogram, bool, u64) {
    let mut h = KmerHistogram::new(k);
    let mut disjoint = true;
    let mut stored = 0u64;
    for &w in sim.members() {
        let Some(local) = sim.table::<LMap<String, V>>(w, table) else {
            continue;
        };
        for (kmer, v) in local.iter() {
            let n = size(v) as u64;
            stored += n;
            if h.counts.insert(kmer.clone(), n).is_some() {
                disjoint = false;
            }
        }
    }
    (h, disjoint, stored)
}

/// Runs a program whose `local` table maps each k-mer to a set of ids.
fn run_sets<V: Lattice>(
    corpus: &Corpus,
    cfg: &KmerRun,
    program: Program,
    size: fn(&V) -> usize,
) -> Result<(Simulation, KmerOutcome), KmerError> {
    let k = cfg.k;
    let read = move |s: &Simulation| read_sets::<V>(s, "local", k, size).0;
    let (sim, mut out) = run(corpus, cfg, program, read)?;
    let (_, disjoint, stored) = read_sets::<V>(&sim, "local", k, size);
    out.disjoint = disjoint;
    out.stored_ids = stored;
    Ok((sim, out))
}

fn impl_a_program() -> Program {
    Program::new()
        .scratch("out", KmerBatch::new())
        .persistent("local", KmerBatch::new())
        .channel("route", "out", "local", |ctx, batch: &KmerBatch| {
            route_instances(ctx, batch, |k, t| {
                KmerBatch::singleton(k.to_owned(), LSet::singleton(t))
            })
        })
}

/// Each k-mer instance goes to its owner, which keeps the set of instance
/// ids per k-mer; the count is the set's size.
pub fn impl_a_run(corpus: &Corpus, cfg: &KmerRun) -> Result<KmerOutcome, KmerError> {
    impl_a_sets(corpus, cfg).map(|(out, _)| out)
}

/// Implementation A, also returning the instance ids stored per k-mer.
pub fn impl_a_sets(corpus: &Corpus, cfg: &KmerRun) -> Result<(KmerOutcome, KmerBatch), KmerError> {
    let (sim, out) = run_sets::<LSet<u64>>(corpus, cfg, impl_a_program(), LSet::len)?;
    let ids = sim.merged::<KmerBatch>("local").unwrap_or_default();
    Ok((out, ids))
}

/// As Implementation A, but owners keep at most about `threshold` ids
/// per k-mer.
pub fn impl_b_run(
    corpus: &Corpus,
    cfg: &KmerRun,
    threshold: usize,
) -> Result<ThresholdOutcome, KmerError> {
    if threshold == 0 {
        return Err(KmerError::ZeroThreshold);
    }
    let proto = LMap::<String, BuddyLSet<u64>>::new();
    let program = Program::new()
        .scratch("out", KmerBatch::new())
        .persistent("local", proto)
        .channel("route", "out", "local", move |ctx, batch: &KmerBatch| {
            route_instances(ctx, batch, |k, t| {
                let v = BuddyLSet::singleton(threshold, t).expect("threshold checked above");
                LMap::singleton(k.to_owned(), v)
            })
        });
    Ok(ThresholdOutcome {
        outcome: run_sets::<BuddyLSet<u64>>(corpus, cfg, program, BuddyLSet::len)?.1,
        threshold,
    })
}

/// How `incoming` is merged into `local` in the native-lset variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardMerge {
    /// `local <= incoming`
    Instant,
    /// `local <+ incoming`
    Deferred,
}

/// Tri-state read of the stored count for `kmer`. A miss is only a local
/// statement, so it comes back as `Idk`.
fn local_count(local: &KmerBatch, kmer: &str) -> Tristate<usize> {
    match local.get(&kmer.to_owned()) {
        Some(s) => Tristate::Value(s.len()),
        None => Tristate::Idk,
    }
}

/// Thresholded counting with a plain lset: arrivals are admitted into
/// `incoming` only while `local` is below the threshold, and `incoming`
/// feeds `local`. The admission test reads `local`, so merging
/// `incoming` into `local` in the same tick is a cycle through a
/// non-monotone edge.
pub fn guarded_count_program(threshold: usize, merge: GuardMerge) -> Program {
    let p = Program::new()
        .scratch("out", KmerBatch::new())
        .scratch("arrivals", KmerBatch::new())
        .scratch("incoming", KmerBatch::new())
        .persistent("local", KmerBatch::new())
        .channel("route", "out", "arrivals", |ctx, batch: &KmerBatch| {
            route_instances(ctx, batch, |k, t| {
                KmerBatch::singleton(k.to_owned(), LSet::singleton(t))
            })
        })
        .instant(
            "incoming",
            &[
                ("arrivals", EdgeKind::Monotone),
                ("local", EdgeKind::Negation),
            ],
            move |t| {
                let arrivals = t.expect::<KmerBatch>("arrivals");
                let local = t.expect::<KmerBatch>("local");
                let mut admitted = KmerBatch::new();
                for (kmer, ids) in arrivals.iter() {
                    let below = match local_count(local, kmer) {
                        Tristate::Value(n) => n < threshold,
                        Tristate::Dne | Tristate::Idk => true,
                    };
                    if below {
                        admitted.merge_key(kmer.clone(), ids);
                    }
                }
                admitted
            },
        );
    let body = |t: &crate::runtime::Tables| t.expect::<KmerBatch>("incoming").clone();
    let sources = [("incoming", EdgeKind::Monotone)];
    match merge {
        GuardMerge::Instant => p.instant("local", &sources, body),
        GuardMerge::Deferred => p.deferred("local", &sources, body),
    }
}

pub fn guarded_count_run(
    corpus: &Corpus,
    cfg: &KmerRun,
    threshold: usize,
    merge: GuardMerge,
) -> Result<KmerOutcome, KmerError> {
    if threshold == 0 {
        return Err(KmerError::ZeroThreshold);
    }
    run_sets::<LSet<u64>>(
        corpus,
        cfg,
        guarded_count_program(threshold, merge),
        LSet::len,
    )
    .map(|(_, out)| out)
}

pub const KMER_SCHEMA: [&str; 2] = ["seq", "token"];

fn kmer_row(kmer: &str, token: u64) -> Row {
    vec![Datum::text(kmer), Datum::Int(token as i64)]
}

/// Per-worker GROUP BY counts. Under a plan that partitions on `group_by`
/// each shard's counts are final and are simply concatenated; otherwise
/// partial counts are gathered at the first worker and summed.
pub fn aggregate_group_counts(
    table: &GlobalTable,
    group_by: &str,
    log: &mut EventLog,
    tick: u64,
) -> Result<(BTreeMap<Datum, u64>, bool), TableError> {
    let plan = table.plan_query(group_by)?;
    let parts = table.local_group_counts(group_by)?;
    for w in parts.keys() {
        log.record(tick, EventKind::Aggregate, Some(*w), Some(*w), None, None);
    }
    let mut total = BTreeMap::new();
    let reducer = parts.keys().next().copied();
    for (w, counts) in &parts {
        if !plan.coordination_free && Some(*w) != reducer && !counts.is_empty() {
            log.record(tick, EventKind::Gather, Some(*w), reducer, None, None);
        }
        for (k, c) in counts {
            *total.entry(k.clone()).or_insert(0) += c;
        }
    }
    Ok((total, plan.coordination_free))
}

/// k-mer counting as a GROUP BY over a hash(seq)-partitioned grow-only
/// table of `(seq, token)` rows.
pub fn buddi_kmer_query(corpus: &Corpus, cfg: &KmerRun) -> Result<BuddiOutcome, KmerError> {
    let program = Program::new()
        .scratch("out", KmerBatch::new())
        .persistent("kmers", GSet::<Row>::new())
        .channel("route", "out", "kmers", |ctx, batch: &KmerBatch| {
            let mut out = Vec::new();
            for (kmer, tokens) in batch.iter() {
                let dst = owner_of(ctx, kmer);
                for &t in tokens.iter() {
                    out.push(Outgoing {
                        dst,
                        token_id: t,
                        payload: Box::new(GSet::from_iter([kmer_row(kmer, t)])),
                    });
                }
            }
            out
        });
    let k = cfg.k;
    let read = move |s: &Simulation| {
        let mut h = KmerHistogram::new(k);
        for &w in s.members() {
            if let Some(rows) = s.table::<GSet<Row>>(w, "kmers") {
                for r in rows.iter() {
                    if let Some(seq) = r[0].as_text() {
                        *h.counts.entry(seq.to_owned()).or_default() += 1;
                    }
                }
            }
        }
        h
    };
    let (mut sim, mut out) = run(corpus, cfg, program, read)?;

    let plan = PartitionPlan::hash("seq", sim.owners().to_vec())?;
    let shards: BTreeMap<WorkerId, CrdtValue> = sim
        .members()
        .iter()
        .filter_map(|&w| {
            let rows = sim.table::<GSet<Row>>(w, "kmers")?;
            (!rows.is_empty()).then(|| (w, CrdtValue::GSet(rows.clone())))
        })
        .collect();
    let table = GlobalTable::from_shards("kmers", CrdtKind::GSet, &KMER_SCHEMA, plan, shards)?;

    let mark = sim.log().len();
    let tick = sim.tick();
    let (counts, coordination_free) = aggregate_group_counts(&table, "seq", sim.log_mut(), tick)?;
    let aggregate_messages = sim
        .log()
        .since(mark)
        .iter()
        .filter(|e| e.is_cross_worker())
        .count();

    let mut histogram = KmerHistogram::new(k);
    for (d, c) in counts {
        if let Some(s) = d.as_text() {
            histogram.counts.insert(s.to_owned(), c);
        }
    }
    let mut home: BTreeMap<String, WorkerId> = BTreeMap::new();
    let mut disjoint = true;
    for (w, shard) in table.shards() {
        for row in shard.live_rows() {
            if let Some(seq) = row[0].as_text() {
                if let Some(prev) = home.insert(seq.to_owned(), *w) {
                    disjoint &= prev == *w;
                }
            }
        }
    }
    out.histogram = histogram;
    out.disjoint = disjoint;
    out.stored_ids = table
        .shards()
        .values()
        .map(|s| s.live_rows().len() as u64)
        .sum();
    out.log = sim.log().clone();
    Ok(BuddiOutcome {
        outcome: out,
        table,
        coordination_free,
        aggregate_messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kmer::{oracle_count, threshold_sound};
    use crate::runtime::{DeliverySchedule, RuntimeError};

    const TEXT: &str = "ATAGATAGCCGTAGATAGATTACA\nGATTACAGATTACA\nAC\n";

    fn cfg(seed: u64) -> KmerRun {
        KmerRun::new(4, 3, DeliverySchedule::adversarial(seed, 0.3, 4, 0.2)).with_batch(3)
    }

    #[test]
    fn impl_a_matches_oracle() {
        let c = Corpus::parse(TEXT).unwrap();
        let out = impl_a_run(&c, &cfg(1)).unwrap();
        assert_eq!(out.histogram, oracle_count(&c, 4));
        assert!(out.disjoint);
        assert_eq!(out.stored_ids, c.total_windows(4));
    }

    #[test]
    fn impl_b_is_threshold_sound() {
        let c = Corpus::parse(TEXT).unwrap();
        let out = impl_b_run(&c, &cfg(2), 2).unwrap();
        assert!(threshold_sound(
            &out.outcome.histogram,
            &oracle_count(&c, 4),
            2
        ));
        assert!(matches!(
            impl_b_run(&c, &cfg(2), 0),
            Err(KmerError::ZeroThreshold)
        ));
    }

    #[test]
    fn guarded_instant_is_rejected_and_deferred_runs() {
        let c = Corpus::parse(TEXT).unwrap();
        let err = guarded_count_run(&c, &cfg(3), 2, GuardMerge::Instant).unwrap_err();
        assert!(matches!(
            err,
            KmerError::Runtime(RuntimeError::Stratification(_))
        ));
        let out = guarded_count_run(&c, &cfg(3), 2, GuardMerge::Deferred).unwrap();
        assert!(threshold_sound(&out.histogram, &oracle_count(&c, 4), 2));
    }

    #[test]
    fn buddi_query_is_coordination_free() {
        let c = Corpus::parse(TEXT).unwrap();
        let out = buddi_kmer_query(&c, &cfg(4)).unwrap();
        assert_eq!(out.outcome.histogram, oracle_count(&c, 4));
        assert!(out.coordination_free);
        assert!(out.table.placement_consistent());
        assert_eq!(out.aggregate_messages, 0);
    }

    #[test]
    fn partials_grow_to_the_answer() {
        let c = Corpus::parse(TEXT).unwrap();
        let mut run = cfg(5);
        run.partials = true;
        let out = impl_a_run(&c, &run).unwrap();
        let totals: Vec<u64> = out.partials.iter().map(|(_, h)| h.total()).collect();
        assert!(totals.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(out.partials.last().unwrap().1, out.histogram);
    }
}
