use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lattice::{DynLattice, GSet, Lattice};

use super::log::{EventKind, EventLog};
use super::network::{DeliverySchedule, NetworkCondition, SimNetwork};
use super::program::{Persistence, Program, RouteCtx, Tables, Timing};
use super::{Envelope, IdGen, RuntimeError, WorkerId, DEFAULT_TICK_CAP};

const STRATUM_PASS_CAP: usize = 10_000;

/// Faults injected at fixed ticks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FaultPlan {
    pub fails: Vec<(u64, WorkerId)>,
    pub joins: Vec<u64>,
    /// Network condition from the given tick on; a healthy condition heals.
    pub partitions: Vec<(u64, NetworkCondition)>,
}

impl FaultPlan {
    fn last_tick(&self) -> u64 {
        self.fails
            .iter()
            .map(|(t, _)| *t)
            .chain(self.joins.iter().copied())
            .chain(self.partitions.iter().map(|(t, _)| *t))
            .max()
            .unwrap_or(0)
    }
}

/// External actor that feeds the simulation: reads input, reacts to joins
/// and failures. The simulator is quiescent only while the driver is idle.
pub trait Driver {
    fn before_tick(&mut self, _ctx: &mut TickCtx<'_>) -> Result<(), RuntimeError> {
        Ok(())
    }

    fn on_join(&mut self, _worker: WorkerId, _ctx: &mut TickCtx<'_>) {}

    fn on_fail(&mut self, _worker: WorkerId, _ctx: &mut TickCtx<'_>) {}

    fn is_idle(&self) -> bool {
        true
    }
}

/// A driver that never does anything.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdleDriver;

impl Driver for IdleDriver {}

/// A driver's handle on the simulation during one tick.
pub struct TickCtx<'a> {
    tick: u64,
    tables: &'a mut BTreeMap<WorkerId, Tables>,
    log: &'a mut EventLog,
    active: &'a [WorkerId],
    ids: &'a mut IdGen,
    touched: bool,
}

impl TickCtx<'_> {
    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Workers currently taking work: registered, eligible, not failed.
    pub fn active(&self) -> &[WorkerId] {
        self.active
    }

    pub fn tables(&self, worker: WorkerId) -> Option<&Tables> {
        self.tables.get(&worker)
    }

    pub fn insert(
        &mut self,
        worker: WorkerId,
        table: &str,
        value: &dyn DynLattice,
    ) -> Result<bool, RuntimeError> {
        self.touched = true;
        insert_into(self.tables, worker, table, value)
    }

    pub fn log(
        &mut self,
        kind: EventKind,
        src: Option<WorkerId>,
        dst: Option<WorkerId>,
        token_id: Option<u64>,
        use_id: Option<u64>,
    ) {
        self.log.record(self.tick, kind, src, dst, token_id, use_id);
    }

    pub fn fresh_id(&mut self) -> u64 {
        self.ids.fresh()
    }
}

fn insert_into(
    tables: &mut BTreeMap<WorkerId, Tables>,
    worker: WorkerId,
    table: &str,
    value: &dyn DynLattice,
) -> Result<bool, RuntimeError> {
    let t = tables
        .get_mut(&worker)
        .ok_or(RuntimeError::UnknownWorker(worker))?
        .get_mut(table)
        .ok_or_else(|| RuntimeError::UnknownTable(table.to_owned()))?;
    Ok(t.merge_dyn(value)?)
}

/// Counters for a finished (or paused) run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunStats {
    pub ticks: u64,
    pub sends: usize,
    pub cross_worker_sends: usize,
    pub deliveries: usize,
    pub duplicates: usize,
    pub drops: usize,
}

pub struct Simulation {
    program: Program,
    strata: Vec<Vec<usize>>,
    deferred_rules: Vec<usize>,
    tables: BTreeMap<WorkerId, Tables>,
    owners: Vec<WorkerId>,
    members: Vec<WorkerId>,
    membership: GSet<(u32, String)>,
    active: Vec<WorkerId>,
    pending_joins: Vec<WorkerId>,
    pending_deferred: Vec<(WorkerId, usize, Box<dyn DynLattice>)>,
    faults: FaultPlan,
    net: SimNetwork,
    ids: IdGen,
    log: EventLog,
    tick: u64,
    tick_cap: u64,
    idle_streak: u32,
}

impl Simulation {
    /// Builds a simulation with workers `0..workers`, all active from the
    /// first tick. Fails if the program is not stratifiable.
    pub fn new(
        program: Program,
        workers: u32,
        schedule: DeliverySchedule,
    ) -> Result<Self, RuntimeError> {
        if workers == 0 {
            return Err(RuntimeError::NoWorkers);
        }
        schedule.validate()?;
        program.check()?;
        let (strata, deferred_rules) = plan_strata(&program);
        let seed = schedule.seed;
        let net = SimNetwork::new(schedule, ChaCha8Rng::seed_from_u64(seed));
        let mut sim = Self {
            program,
            strata,
            deferred_rules,
            tables: BTreeMap::new(),
            owners: Vec::new(),
            members: Vec::new(),
            membership: GSet::new(),
            active: Vec::new(),
            pending_joins: Vec::new(),
            pending_deferred: Vec::new(),
            faults: FaultPlan::default(),
            net,
            ids: IdGen::new(seed),
            log: EventLog::new(),
            tick: 0,
            tick_cap: DEFAULT_TICK_CAP,
            idle_streak: 1,
        };
        for i in 0..workers {
            let w = sim.add_worker(&format!("worker-{i}"));
            sim.active.push(w);
        }
        sim.owners = sim.members.clone();
        Ok(sim)
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    pub fn with_tick_cap(mut self, cap: u64) -> Self {
        self.tick_cap = cap;
        self
    }

    fn add_worker(&mut self, meta: &str) -> WorkerId {
        let w = WorkerId(self.members.len() as u32);
        let mut t = Tables::default();
        for decl in &self.program.tables {
            t.insert(decl.name.clone(), decl.proto.bottom_box());
        }
        self.tables.insert(w, t);
        self.members.push(w);
        self.membership.insert((w.0, meta.to_owned()));
        w
    }

    /// Allocates a new worker. It takes work from the next tick on.
    pub fn register_worker(&mut self, meta: &str) -> WorkerId {
        let w = self.add_worker(meta);
        self.log
            .record(self.tick, EventKind::Join, Some(w), None, None, None);
        self.pending_joins.push(w);
        self.idle_streak = 0;
        w
    }

    pub fn membership(&self) -> &GSet<(u32, String)> {
        &self.membership
    }

    pub fn owners(&self) -> &[WorkerId] {
        &self.owners
    }

    pub fn members(&self) -> &[WorkerId] {
        &self.members
    }

    pub fn active(&self) -> &[WorkerId] {
        &self.active
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn network(&self) -> &NetworkCondition {
        self.net.condition()
    }

    pub fn in_flight(&self) -> usize {
        self.net.in_flight()
    }

    pub fn set_network(&mut self, condition: NetworkCondition) {
        let kind = if condition.is_healthy() {
            EventKind::Heal
        } else {
            EventKind::Partition
        };
        self.log.record(self.tick, kind, None, None, None, None);
        self.net.set_condition(condition, self.tick, &mut self.log);
    }

    pub fn fresh_id(&mut self) -> u64 {
        self.ids.fresh()
    }

    pub fn id_collisions(&self) -> u64 {
        self.ids.collisions()
    }

    pub fn tables(&self, worker: WorkerId) -> Option<&Tables> {
        self.tables.get(&worker)
    }

    pub fn table<L: Lattice>(&self, worker: WorkerId, name: &str) -> Option<&L> {
        self.tables.get(&worker)?.get::<L>(name)
    }

    /// Merge of `name` over every worker.
    pub fn merged<L: Lattice>(&self, name: &str) -> Option<L> {
        let mut it = self.tables.values().filter_map(|t| t.get::<L>(name));
        let mut acc = it.next()?.clone();
        for v in it {
            acc.merge_from(v);
        }
        Some(acc)
    }

    /// Merges `value` into a worker's table from outside the program.
    pub fn insert(
        &mut self,
        worker: WorkerId,
        table: &str,
        value: &dyn DynLattice,
    ) -> Result<bool, RuntimeError> {
        self.idle_streak = 0;
        insert_into(&mut self.tables, worker, table, value)
    }

    pub fn stats(&self) -> RunStats {
        let sends = self.log.of_kind(EventKind::Send);
        let (mut n, mut cross) = (0, 0);
        for e in sends {
            n += 1;
            if e.is_cross_worker() {
                cross += 1;
            }
        }
        RunStats {
            ticks: self.tick,
            sends: n,
            cross_worker_sends: cross,
            deliveries: self.log.count(EventKind::Deliver),
            duplicates: self.log.count(EventKind::Dup),
            drops: self.log.count(EventKind::Drop),
        }
    }

    pub fn is_quiescent(&self, driver: &dyn Driver) -> bool {
        let needed = if self.pending_deferred.is_empty() {
            1
        } else {
            2
        };
        self.net.is_empty()
            && self.pending_joins.is_empty()
            && self.faults.last_tick() <= self.tick
            && driver.is_idle()
            && self.idle_streak >= needed
    }

    pub fn run_to_quiescence(&mut self, driver: &mut dyn Driver) -> Result<RunStats, RuntimeError> {
        self.run_observed(driver, |_| {})
    }

    /// Like [`Self::run_to_quiescence`], calling `observe` after every tick.
    pub fn run_observed(
        &mut self,
        driver: &mut dyn Driver,
        mut observe: impl FnMut(&Simulation),
    ) -> Result<RunStats, RuntimeError> {
        while !self.is_quiescent(driver) {
            if self.tick >= self.tick_cap {
                return Err(RuntimeError::Divergence(self.tick_cap));
            }
            self.step(driver)?;
            observe(self);
        }
        Ok(self.stats())
    }

    /// Advances one tick.
    pub fn step(&mut self, driver: &mut dyn Driver) -> Result<(), RuntimeError> {
        self.tick += 1;
        let now = self.tick;
        let mut busy = false;

        for w in std::mem::take(&mut self.pending_joins) {
            self.active.push(w);
            busy = true;
            let mut ctx = self.ctx();
            driver.on_join(w, &mut ctx);
        }

        let partitions: Vec<NetworkCondition> = self
            .faults
            .partitions
            .iter()
            .filter(|(t, _)| *t == now)
            .map(|(_, c)| c.clone())
            .collect();
        for c in partitions {
            self.set_network(c);
            busy = true;
        }
        let fails: Vec<WorkerId> = self
            .faults
            .fails
            .iter()
            .filter(|(t, _)| *t == now)
            .map(|(_, w)| *w)
            .collect();
        for w in fails {
            if !self.active.contains(&w) {
                continue;
            }
            self.active.retain(|a| *a != w);
            self.log
                .record(now, EventKind::Fail, Some(w), None, None, None);
            busy = true;
            let mut ctx = self.ctx();
            driver.on_fail(w, &mut ctx);
        }
        let joins = self.faults.joins.iter().filter(|t| **t == now).count();
        for _ in 0..joins {
            let n = self.members.len();
            self.register_worker(&format!("worker-{n}"));
            busy = true;
        }

        let mut ctx = self.ctx();
        driver.before_tick(&mut ctx)?;
        busy |= ctx.touched;

        let mut changed = false;
        for (w, rule, v) in std::mem::take(&mut self.pending_deferred) {
            let target = &self.program.rules[rule].target;
            changed |= insert_into(&mut self.tables, w, target, v.as_ref())?;
        }

        let arrived = self.net.take_due(now, &mut self.log);
        busy |= !arrived.is_empty();
        for env in arrived {
            let target = &self.program.channels[env.channel].target;
            changed |= insert_into(&mut self.tables, env.dst, target, env.payload.as_ref())?;
        }

        let workers: Vec<WorkerId> = self.members.clone();
        for &w in &workers {
            changed |= self.run_instant(w)?;
            self.queue_deferred(w);
        }
        for &w in &workers {
            busy |= self.ship(w);
        }
        self.clear_scratch();

        if busy || changed {
            self.idle_streak = 0;
        } else {
            self.idle_streak += 1;
        }
        Ok(())
    }

    fn ctx(&mut self) -> TickCtx<'_> {
        TickCtx {
            tick: self.tick,
            tables: &mut self.tables,
            log: &mut self.log,
            active: &self.active,
            ids: &mut self.ids,
            touched: false,
        }
    }

    fn run_instant(&mut self, w: WorkerId) -> Result<bool, RuntimeError> {
        let mut changed = false;
        let tables = self
            .tables
            .get_mut(&w)
            .ok_or(RuntimeError::UnknownWorker(w))?;
        for stratum in &self.strata {
            let mut passes = 0;
            loop {
                let mut pass_changed = false;
                for &r in stratum {
                    let rule = &self.program.rules[r];
                    let v = (rule.body)(tables);
                    let t = tables
                        .get_mut(&rule.target)
                        .ok_or_else(|| RuntimeError::UnknownTable(rule.target.clone()))?;
                    pass_changed |= t.merge_dyn(v.as_ref())?;
                }
                changed |= pass_changed;
                passes += 1;
                if !pass_changed {
                    break;
                }
                if passes >= STRATUM_PASS_CAP {
                    return Err(RuntimeError::Divergence(self.tick));
                }
            }
        }
        Ok(changed)
    }

    fn queue_deferred(&mut self, w: WorkerId) {
        let Some(tables) = self.tables.get(&w) else {
            return;
        };
        for &r in &self.deferred_rules {
            let v = (self.program.rules[r].body)(tables);
            if !v.is_bottom_dyn() {
                self.pending_deferred.push((w, r, v));
            }
        }
    }

    fn ship(&mut self, w: WorkerId) -> bool {
        let mut sent = false;
        for (ci, ch) in self.program.channels.iter().enumerate() {
            let Some(src) = self.tables.get(&w).and_then(|t| t.get_dyn(&ch.source)) else {
                continue;
            };
            if src.is_bottom_dyn() {
                continue;
            }
            let ctx = RouteCtx {
                src: w,
                owners: &self.owners,
                members: &self.members,
            };
            for out in (ch.route)(&ctx, src) {
                let env = Envelope {
                    token_id: out.token_id,
                    use_id: self.ids.fresh(),
                    src: w,
                    dst: out.dst,
                    channel: ci,
                    payload: out.payload,
                    send_tick: self.tick,
                };
                self.net.send(env, self.tick, &mut self.log);
                sent = true;
            }
        }
        sent
    }

    fn clear_scratch(&mut self) {
        for decl in &self.program.tables {
            if decl.persistence != Persistence::Scratch {
                continue;
            }
            for t in self.tables.values_mut() {
                if let Some(slot) = t.get_mut(&decl.name) {
                    if !slot.is_bottom_dyn() {
                        *slot = decl.proto.bottom_box();
                    }
                }
            }
        }
    }
}

/// Groups instant rules into strata (strongly connected components of the
/// instant-edge graph, in dependency order) and lists the deferred rules.
fn plan_strata(program: &Program) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut g: DiGraph<&str, ()> = DiGraph::new();
    let idx: BTreeMap<&str, _> = program
        .tables
        .iter()
        .map(|t| (t.name.as_str(), g.add_node(t.name.as_str())))
        .collect();
    for r in program.rules.iter().filter(|r| r.timing == Timing::Instant) {
        for (s, _) in &r.sources {
            g.update_edge(idx[s.as_str()], idx[r.target.as_str()], ());
        }
    }
    let mut sccs = tarjan_scc(&g);
    sccs.reverse();
    let mut strata = Vec::new();
    for scc in sccs {
        let members: BTreeSet<&str> = scc.iter().map(|n| g[*n]).collect();
        let rules: Vec<usize> = program
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.timing == Timing::Instant && members.contains(r.target.as_str()))
            .map(|(i, _)| i)
            .collect();
        if !rules.is_empty() {
            strata.push(rules);
        }
    }
    let deferred = program
        .rules
        .iter()
        .enumerate()
        .filter(|(_, r)| r.timing == Timing::Deferred)
        .map(|(i, _)| i)
        .collect();
    (strata, deferred)
}
