use std::collections::BTreeMap;

use bloomsim::hash::hash_pair;
use bloomsim::kmer::{
    buddi_kmer_query, impl_a_run, impl_b_run, oracle_count, threshold_sound, Corpus, KmerError,
    KmerHistogram, KmerOutcome, KmerRun,
};
use bloomsim::lattice::{merge, GSet, Lattice, LogicalClock, LwwSet, TrueSet, TwoPSet};
use bloomsim::runtime::{EventKind, EventLog, NetworkCondition, RunStats, RuntimeError, WorkerId};
use bloomsim::sketch::{
    choose_params, design1_run, design2_run, sequential_sketch, SketchError, SketchMatrix,
};
use bloomsim::tables::Tristate;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, Workload};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("bad input: {0}")]
    Input(String),
    #[error("no quiescence within {0} ticks")]
    Divergence(u64),
    #[error("{0}")]
    Failed(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Divergence(_) => 3,
            _ => 2,
        }
    }
}

impl From<KmerError> for RunError {
    fn from(e: KmerError) -> Self {
        match e {
            KmerError::Runtime(RuntimeError::Divergence(n)) => RunError::Divergence(n),
            KmerError::InvalidBase { .. } | KmerError::Io(_) | KmerError::BadK(_) => {
                RunError::Input(e.to_string())
            }
            other => RunError::Failed(other.to_string()),
        }
    }
}

impl From<SketchError> for RunError {
    fn from(e: SketchError) -> Self {
        match e {
            SketchError::Kmer(k) => k.into(),
            SketchError::Runtime(RuntimeError::Divergence(n)) => RunError::Divergence(n),
            SketchError::Columns { .. } => RunError::Input(e.to_string()),
            other => RunError::Failed(other.to_string()),
        }
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct Execution {
    pub report: Value,
    pub log: EventLog,
    pub matched: bool,
    /// The part of the result that must agree across seeds.
    pub state: Value,
    pub partials: Vec<(u64, KmerHistogram)>,
}

impl Execution {
    pub fn exit_code(&self) -> i32 {
        if self.matched {
            0
        } else {
            1
        }
    }

    /// The report as pretty JSON with sorted keys and a trailing newline.
    pub fn report_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report is plain JSON");
        s.push('\n');
        s
    }

    /// One JSON object per tick: `{"tick", "histogram"}`.
    pub fn partials_text(&self) -> String {
        let mut s = String::new();
        for (tick, h) in &self.partials {
            s.push_str(&json!({"tick": tick, "histogram": h.to_json()}).to_string());
            s.push('\n');
        }
        s
    }
}

struct Body {
    result: Value,
    oracle: Value,
    matched: bool,
    state: Value,
    stats: RunStats,
    log: EventLog,
    partials: Vec<(u64, KmerHistogram)>,
    extra: Vec<(&'static str, Value)>,
}

pub fn execute(cfg: &RunConfig, partials: bool) -> Result<Execution, RunError> {
    cfg.validate()?;
    let body = match cfg.workload {
        Workload::LatticeDemo => lattice_demo(cfg.seed),
        w => {
            let path = cfg.input.as_ref().ok_or(ConfigError::MissingInput(w))?;
            let corpus = Corpus::load(path)?;
            let mut run = KmerRun::new(cfg.k, cfg.workers, cfg.schedule())
                .with_faults(cfg.faults())
                .with_batch(cfg.batch);
            run.tick_cap = cfg.tick_cap;
            run.sabotage = cfg.sabotage;
            run.partials = partials;
            match w {
                Workload::KmerA => kmer_a(&corpus, &run)?,
                Workload::KmerB => kmer_b(&corpus, &run, cfg.threshold)?,
                Workload::BuddiKmer => buddi(&corpus, &run)?,
                Workload::CmsDesign1 => cms(&corpus, &run, cfg, true)?,
                Workload::CmsDesign2 => cms(&corpus, &run, cfg, false)?,
                Workload::LatticeDemo => unreachable!("handled above"),
            }
        }
    };
    let mut events: BTreeMap<&str, usize> = BTreeMap::new();
    for e in body.log.events() {
        *events.entry(e.kind.as_str()).or_default() += 1;
    }
    let mut report = json!({
        "config": cfg.to_json(),
        "workload": cfg.workload.name(),
        "match": body.matched,
        "result": body.result,
        "oracle": body.oracle,
        "ticks": body.stats.ticks,
        "messages": body.stats.sends,
        "cross_worker_messages": body.stats.cross_worker_sends,
        "deliveries": body.stats.deliveries,
        "duplicates": body.stats.duplicates,
        "drops": body.stats.drops,
        "coordination_events": body.log.count(EventKind::Gather),
        "events": events,
    });
    for (k, v) in body.extra {
        report[k] = v;
    }
    Ok(Execution {
        report,
        log: body.log,
        matched: body.matched,
        state: body.state,
        partials: body.partials,
    })
}

fn kmer_body(out: KmerOutcome, oracle: &KmerHistogram, matched: bool, state: Value) -> Body {
    Body {
        result: out.histogram.to_json(),
        oracle: oracle.to_json(),
        matched,
        state,
        stats: out.stats,
        log: out.log,
        partials: out.partials,
        extra: vec![
            ("disjoint", json!(out.disjoint)),
            ("stored_ids", json!(out.stored_ids)),
        ],
    }
}

fn kmer_a(corpus: &Corpus, run: &KmerRun) -> Result<Body, RunError> {
    let oracle = oracle_count(corpus, run.k);
    let out = impl_a_run(corpus, run)?;
    let matched = out.histogram == oracle;
    let state = out.histogram.to_json();
    Ok(kmer_body(out, &oracle, matched, state))
}

/// Exact counts below the threshold plus the set at or above it.
pub fn threshold_projection(h: &KmerHistogram, threshold: u64) -> Value {
    let below: BTreeMap<&String, u64> = h
        .counts
        .iter()
        .filter(|(_, c)| **c < threshold)
        .map(|(k, c)| (k, *c))
        .collect();
    json!({"below": below, "at_least": h.at_least(threshold)})
}

fn kmer_b(corpus: &Corpus, run: &KmerRun, threshold: usize) -> Result<Body, RunError> {
    let oracle = oracle_count(corpus, run.k);
    let out = impl_b_run(corpus, run, threshold)?;
    let t = threshold as u64;
    let matched = threshold_sound(&out.outcome.histogram, &oracle, t);
    let state = threshold_projection(&out.outcome.histogram, t);
    let mut body = kmer_body(out.outcome, &oracle, matched, state);
    body.extra.push(("threshold", json!(threshold)));
    Ok(body)
}

fn buddi(corpus: &Corpus, run: &KmerRun) -> Result<Body, RunError> {
    let oracle = oracle_count(corpus, run.k);
    let out = buddi_kmer_query(corpus, run)?;
    let matched = out.outcome.histogram == oracle;
    let state = out.outcome.histogram.to_json();
    let mut body = kmer_body(out.outcome, &oracle, matched, state);
    body.extra
        .push(("coordination_free", json!(out.coordination_free)));
    body.extra
        .push(("aggregate_messages", json!(out.aggregate_messages)));
    body.extra.push((
        "placement_consistent",
        json!(out.table.placement_consistent()),
    ));
    Ok(body)
}

fn cms(corpus: &Corpus, run: &KmerRun, cfg: &RunConfig, design1: bool) -> Result<Body, RunError> {
    let params = choose_params(cfg.eps, cfg.delta)?;
    let seq = sequential_sketch(corpus, run.k, &params);
    let truth = oracle_count(corpus, run.k);
    let (sketch, estimates, stats, log, converged): (
        SketchMatrix,
        BTreeMap<String, u64>,
        _,
        _,
        bool,
    ) = if design1 {
        let mut d1 = design1_run(corpus, run, &params)?;
        let at = WorkerId(0);
        let mut est = BTreeMap::new();
        for kmer in truth.counts.keys() {
            if let Tristate::Value(v) = d1.query(kmer, at, &NetworkCondition::Healthy) {
                est.insert(kmer.clone(), v);
            }
        }
        (d1.assemble(), est, d1.stats.clone(), d1.log.clone(), true)
    } else {
        let d2 = design2_run(corpus, run, &params)?;
        let replica = d2.replicas[&WorkerId(0)].clone();
        let est = truth
            .counts
            .keys()
            .map(|k| (k.clone(), replica.query(k)))
            .collect();
        let converged = d2.converged();
        (replica, est, d2.stats, d2.log, converged)
    };
    let one_sided = truth
        .counts
        .iter()
        .all(|(k, c)| estimates.get(k).is_some_and(|e| e >= c));
    let agrees = truth
        .counts
        .keys()
        .all(|k| estimates.get(k) == Some(&seq.query(k)));
    let matched = converged && sketch == seq && one_sided && agrees;
    let state = json!({"sketch": sketch.dump_json(), "estimates": estimates});
    Ok(Body {
        result: state.clone(),
        oracle: json!({"sketch": seq.dump_json(), "counts": truth.counts}),
        matched,
        state,
        stats,
        log,
        partials: Vec::new(),
        extra: vec![
            ("converged", json!(converged)),
            ("one_sided", json!(one_sided)),
        ],
    })
}

/// Three replicas apply seeded operations to each CRDT kind, then merge in
/// every order; all orders must give the same read.
fn lattice_demo(seed: u64) -> Body {
    let mut draws = (0u64..).map(|i| hash_pair(seed, i));
    let mut next = move |n: u64| draws.next().expect("infinite") % n;

    let mut gsets = vec![GSet::<u32>::new(); 3];
    let mut twops = vec![TwoPSet::<u32>::new(); 3];
    let mut lwws = vec![LwwSet::<u32>::new(); 3];
    let mut trues = vec![TrueSet::<u32, u32>::new(); 3];
    let mut clocks: Vec<LogicalClock> = (0..3).map(LogicalClock::new).collect();
    for _ in 0..24 {
        let r = next(3) as usize;
        let x = next(6) as u32;
        let ts = clocks[r].tick();
        if next(3) == 0 {
            twops[r].remove(x);
            lwws[r].remove(x, ts);
            trues[r].delete(x, ts);
        } else {
            gsets[r].insert(x);
            twops[r].insert(x);
            lwws[r].add(x, ts);
            trues[r].insert(x, next(1 << 32), ts, next(100) as u32);
        }
    }
    const ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    fn all_orders<L: Lattice, R: PartialEq>(xs: &[L], read: impl Fn(&L) -> R) -> (R, bool) {
        let reads: Vec<R> = ORDERS
            .iter()
            .map(|o| {
                let ab = merge(&xs[o[0]], &xs[o[1]]).expect("same kind");
                read(&merge(&ab, &xs[o[2]]).expect("same kind"))
            })
            .collect();
        let same = reads.iter().all(|r| *r == reads[0]);
        (reads.into_iter().next().expect("six orders"), same)
    }
    let (g, g_ok) = all_orders(&gsets, |s| s.as_set().clone());
    let (t, t_ok) = all_orders(&twops, TwoPSet::read);
    let (l, l_ok) = all_orders(&lwws, LwwSet::elements);
    let (tr, tr_ok) = all_orders(&trues, TrueSet::read);
    let result = json!({
        "gset": g,
        "twopset": t,
        "lwwset": l,
        "trueset": tr,
    });
    let agreement = json!({
        "gset": g_ok,
        "twopset": t_ok,
        "lwwset": l_ok,
        "trueset": tr_ok,
    });
    Body {
        result: result.clone(),
        oracle: agreement,
        matched: g_ok && t_ok && l_ok && tr_ok,
        state: result,
        stats: RunStats::default(),
        log: EventLog::new(),
        partials: Vec::new(),
        extra: Vec::new(),
    }
}
