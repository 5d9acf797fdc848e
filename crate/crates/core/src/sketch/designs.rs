use std::collections::BTreeMap;

use crate::hash::hash_pair;
use crate::kmer::{Corpus, IngestDriver, KmerRun};
use crate::lattice::{LMap, LSet, Lattice};
use crate::runtime::{
    EventKind, EventLog, NetworkCondition, Outgoing, Program, RunStats, Simulation, Tables,
    WorkerId,
};
use crate::tables::{Datum, EdgeKind, PartitionPlan, Tristate};

use super::{CmsParams, SketchError, SketchMatrix};

type KmerBatch = LMap<String, LSet<u64>>;
/// `(row, column)` to ids: the part of the sketch one worker owns.
pub type Slab = LMap<(u32, u32), LSet<u64>>;

/// Range plan giving worker `i` columns `[ceil(i*m/P), ceil((i+1)*m/P))`.
pub fn column_plan(m: usize, workers: &[WorkerId]) -> Result<PartitionPlan, SketchError> {
    let p = workers.len();
    if p == 0 || m < p {
        return Err(SketchError::Columns { m, workers: p });
    }
    let boundaries = (1..p)
        .map(|i| Datum::Int((i * m).div_ceil(p) as i64))
        .collect();
    Ok(PartitionPlan::range(
        "column",
        boundaries,
        workers.to_vec(),
    )?)
}

fn initial_owners(n: u32) -> Vec<WorkerId> {
    (0..n).map(WorkerId).collect()
}

fn simulate(
    corpus: &Corpus,
    cfg: &KmerRun,
    program: Program,
    join_push: bool,
) -> Result<Simulation, SketchError> {
    let pool = cfg.pool(corpus)?;
    let mut sim = Simulation::new(program, cfg.workers, cfg.schedule.clone())?
        .with_faults(cfg.faults.clone())
        .with_tick_cap(cfg.tick_cap);
    let mut driver = IngestDriver::new(pool, cfg, "out");
    if join_push {
        driver = driver.on_join_also(|joiner, ctx| {
            let peers: Vec<WorkerId> = ctx
                .active()
                .iter()
                .copied()
                .filter(|w| *w != joiner)
                .collect();
            for w in peers {
                let replica = ctx
                    .tables(w)
                    .and_then(|t| t.get::<SketchMatrix>("replica"))
                    .cloned();
                if let Some(r) = replica.filter(|r| !r.is_bottom()) {
                    let _ = ctx.insert(w, "handoff", &r);
                }
            }
        });
    }
    sim.run_to_quiescence(&mut driver)?;
    Ok(sim)
}

/// Column-partitioned sketch: each of the `h` cell updates of an instance
/// goes to the worker whose slab holds that column.
pub fn design1_program(params: &CmsParams, plan: &PartitionPlan) -> Program {
    let params = params.clone();
    let plan = plan.clone();
    Program::new()
        .scratch("out", KmerBatch::new())
        .persistent("cells", Slab::new())
        .channel("cells", "out", "cells", move |_ctx, batch: &KmerBatch| {
            let mut out = Vec::new();
            for (kmer, tokens) in batch.iter() {
                for &t in tokens.iter() {
                    let mut per_owner: BTreeMap<WorkerId, Slab> = BTreeMap::new();
                    for row in 0..params.h() {
                        let col = params.column(row, kmer);
                        let owner = plan.route(Some(&Datum::Int(col as i64)), 0);
                        per_owner
                            .entry(owner)
                            .or_default()
                            .merge_key((row as u32, col as u32), &LSet::singleton(t));
                    }
                    for (dst, slab) in per_owner {
                        out.push(Outgoing {
                            dst,
                            token_id: hash_pair(t, u64::from(dst.0)),
                            payload: Box::new(slab),
                        });
                    }
                }
            }
            out
        })
}

#[derive(Debug, Clone)]
pub struct Design1Outcome {
    pub params: CmsParams,
    pub plan: PartitionPlan,
    pub slabs: BTreeMap<WorkerId, Slab>,
    pub stats: RunStats,
    pub log: EventLog,
    pub tick: u64,
}

impl Design1Outcome {
    /// Estimate for `x` as seen from `at`: one gather per row from the
    /// row's column owner, reduced by `min`. An owner that `at` cannot
    /// reach makes the answer unknown.
    pub fn query(&mut self, x: &str, at: WorkerId, net: &NetworkCondition) -> Tristate<u64> {
        let mut best: Option<u64> = None;
        for row in 0..self.params.h() {
            let col = self.params.column(row, x);
            let owner = self.plan.route(Some(&Datum::Int(col as i64)), 0);
            if net.separates(at, owner) {
                return Tristate::Idk;
            }
            self.log.record(
                self.tick,
                EventKind::Gather,
                Some(owner),
                Some(at),
                None,
                None,
            );
            let n = self
                .slabs
                .get(&owner)
                .and_then(|s| s.get(&(row as u32, col as u32)))
                .map_or(0, |c| c.len() as u64);
            best = Some(best.map_or(n, |b| b.min(n)));
        }
        best.map_or(Tristate::Idk, Tristate::Value)
    }

    /// All slabs laid back into one matrix.
    pub fn assemble(&self) -> SketchMatrix {
        let mut sk = SketchMatrix::new(self.params.clone());
        for slab in self.slabs.values() {
            for (&(row, col), ids) in slab.iter() {
                sk.merge_cell(row as usize, col as usize, ids);
            }
        }
        sk
    }

    /// Cells stored on a worker outside its own slab.
    pub fn misplaced_cells(&self) -> usize {
        self.slabs
            .iter()
            .map(|(w, slab)| {
                slab.keys()
                    .filter(|(_, c)| self.plan.route(Some(&Datum::Int(i64::from(*c))), 0) != *w)
                    .count()
            })
            .sum()
    }
}

pub fn design1_run(
    corpus: &Corpus,
    cfg: &KmerRun,
    params: &CmsParams,
) -> Result<Design1Outcome, SketchError> {
    let plan = column_plan(params.m(), &initial_owners(cfg.workers))?;
    let sim = simulate(corpus, cfg, design1_program(params, &plan), false)?;
    let slabs = sim
        .members()
        .iter()
        .filter_map(|&w| Some((w, sim.table::<Slab>(w, "cells")?.clone())))
        .collect();
    Ok(Design1Outcome {
        params: params.clone(),
        plan,
        slabs,
        stats: sim.stats(),
        log: sim.log().clone(),
        tick: sim.tick(),
    })
}

fn sketch_token(sk: &SketchMatrix) -> u64 {
    let mut h = 0u64;
    let (rows, cols) = (sk.params().h(), sk.params().m());
    for r in 0..rows {
        for c in 0..cols {
            for &t in sk.cell(r, c).iter() {
                h = hash_pair(h, hash_pair((r * cols + c) as u64, t));
            }
        }
    }
    h
}

/// Replicated sketch: owners insert what they are routed into `fresh`,
/// fold it into their `replica`, and gossip `fresh` to every other
/// member. A joining worker is brought up to date by its peers pushing
/// their whole replica.
pub fn design2_program(params: &CmsParams) -> Program {
    let proto = SketchMatrix::new(params.clone());
    let insert_proto = proto.clone();
    let gossip = |ctx: &crate::runtime::RouteCtx<'_>, sk: &SketchMatrix| {
        let token = sketch_token(sk);
        ctx.members
            .iter()
            .filter(|w| **w != ctx.src)
            .map(|&dst| Outgoing {
                dst,
                token_id: token,
                payload: Box::new(sk.clone()),
            })
            .collect()
    };
    Program::new()
        .scratch("out", KmerBatch::new())
        .scratch("arrivals", KmerBatch::new())
        .scratch("fresh", proto.clone())
        .scratch("handoff", proto.clone())
        .persistent("replica", proto)
        .channel("route", "out", "arrivals", |ctx, batch: &KmerBatch| {
            let mut out = Vec::new();
            for (kmer, tokens) in batch.iter() {
                let dst = ctx.owners[crate::hash::owner_index(kmer, ctx.owners.len())];
                for &t in tokens.iter() {
                    out.push(Outgoing {
                        dst,
                        token_id: t,
                        payload: Box::new(KmerBatch::singleton(kmer.clone(), LSet::singleton(t))),
                    });
                }
            }
            out
        })
        .instant(
            "fresh",
            &[("arrivals", EdgeKind::Monotone)],
            move |t: &Tables| {
                let mut sk = insert_proto.clone();
                for (kmer, tokens) in t.expect::<KmerBatch>("arrivals").iter() {
                    for &tok in tokens.iter() {
                        sk.insert(kmer, tok);
                    }
                }
                sk
            },
        )
        .instant("replica", &[("fresh", EdgeKind::Monotone)], |t: &Tables| {
            t.expect::<SketchMatrix>("fresh").clone()
        })
        .channel("gossip", "fresh", "replica", gossip)
        .channel("handoff", "handoff", "replica", gossip)
}

#[derive(Debug, Clone)]
pub struct Design2Outcome {
    pub params: CmsParams,
    pub replicas: BTreeMap<WorkerId, SketchMatrix>,
    pub stats: RunStats,
    pub log: EventLog,
}

impl Design2Outcome {
    /// Every replica is identical.
    pub fn converged(&self) -> bool {
        let mut it = self.replicas.values();
        match it.next() {
            Some(first) => it.all(|r| r == first),
            None => true,
        }
    }

    pub fn replica(&self, w: WorkerId) -> Option<&SketchMatrix> {
        self.replicas.get(&w)
    }

    /// A purely local read of `at`'s replica.
    pub fn query(&self, x: &str, at: WorkerId) -> Option<u64> {
        self.replicas.get(&at).map(|r| r.query(x))
    }
}

pub fn design2_run(
    corpus: &Corpus,
    cfg: &KmerRun,
    params: &CmsParams,
) -> Result<Design2Outcome, SketchError> {
    let sim = simulate(corpus, cfg, design2_program(params), true)?;
    let replicas = sim
        .members()
        .iter()
        .filter_map(|&w| Some((w, sim.table::<SketchMatrix>(w, "replica")?.clone())))
        .collect();
    Ok(Design2Outcome {
        params: params.clone(),
        replicas,
        stats: sim.stats(),
        log: sim.log().clone(),
    })
}
