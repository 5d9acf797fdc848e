use std::collections::{BTreeMap, BTreeSet};

use crate::dispenser::{default_chunk_len, Chunk, WorkPool};
use crate::lattice::{LMap, LSet};
use crate::runtime::{
    DeliverySchedule, Driver, EventKind, FaultPlan, RuntimeError, TickCtx, WorkerId,
    DEFAULT_TICK_CAP,
};

use super::{check_k, Corpus, KmerError};

/// Deliberate faults for negative-path tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sabotage {
    /// The first hand-out of chunk 0 is marked complete without emitting
    /// any of its k-mers.
    LoseChunk,
}

/// Settings shared by every k-mer workload.
#[derive(Debug, Clone)]
pub struct KmerRun {
    pub k: usize,
    pub workers: u32,
    pub schedule: DeliverySchedule,
    pub faults: FaultPlan,
    /// k-mers each worker reads per tick.
    pub batch: usize,
    /// Per-worker override of `batch`; 0 models a worker that claims a
    /// chunk and then never reads it.
    pub rates: BTreeMap<WorkerId, usize>,
    pub chunk_len: Option<u64>,
    /// A worker holding work that reads nothing for this many ticks is
    /// dropped from the pool.
    pub silence_limit: Option<u64>,
    pub tick_cap: u64,
    pub sabotage: Option<Sabotage>,
    /// Record the histogram after every tick.
    pub partials: bool,
}

impl KmerRun {
    pub fn new(k: usize, workers: u32, schedule: DeliverySchedule) -> Self {
        Self {
            k,
            workers,
            schedule,
            faults: FaultPlan::default(),
            batch: 16,
            rates: BTreeMap::new(),
            chunk_len: None,
            silence_limit: None,
            tick_cap: DEFAULT_TICK_CAP,
            sabotage: None,
            partials: false,
        }
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_chunk_len(mut self, len: u64) -> Self {
        self.chunk_len = Some(len);
        self
    }

    pub(crate) fn pool(&self, corpus: &Corpus) -> Result<WorkPool, KmerError> {
        check_k(self.k)?;
        let source = corpus.source().clone();
        let len = match self.chunk_len {
            Some(l) => l,
            None => default_chunk_len(source.len()?, self.workers),
        };
        Ok(WorkPool::from_source(source, len)?)
    }
}

struct Cursor {
    chunk: Chunk,
    windows: Vec<(String, u64)>,
    pos: usize,
    idle: u64,
}

type JoinHook = Box<dyn FnMut(WorkerId, &mut TickCtx<'_>) + Send>;

/// Feeds k-mers from a [`WorkPool`] into every active worker's scratch
/// table, one batch per tick, tagging each instance with its byte offset.
pub struct IngestDriver {
    pool: WorkPool,
    k: usize,
    batch: usize,
    rates: BTreeMap<WorkerId, usize>,
    table: String,
    cursors: BTreeMap<WorkerId, Cursor>,
    silence_limit: Option<u64>,
    // dropped for silence; never handed work again
    silenced: BTreeSet<WorkerId>,
    sabotage: Option<Sabotage>,
    join_hook: Option<JoinHook>,
}

impl IngestDriver {
    pub fn new(pool: WorkPool, cfg: &KmerRun, table: &str) -> Self {
        Self {
            pool,
            k: cfg.k,
            batch: cfg.batch,
            rates: cfg.rates.clone(),
            table: table.to_owned(),
            cursors: BTreeMap::new(),
            silence_limit: cfg.silence_limit,
            silenced: BTreeSet::new(),
            sabotage: cfg.sabotage,
            join_hook: None,
        }
    }

    pub fn on_join_also(
        mut self,
        hook: impl FnMut(WorkerId, &mut TickCtx<'_>) + Send + 'static,
    ) -> Self {
        self.join_hook = Some(Box::new(hook));
        self
    }

    pub fn pool(&self) -> &WorkPool {
        &self.pool
    }

    fn windows(&self, chunk: &Chunk) -> Result<Vec<(String, u64)>, RuntimeError> {
        let k = self.k;
        let bytes = self
            .pool
            .read(chunk, k as u64 - 1)
            .map_err(|e| RuntimeError::Driver(e.to_string()))?;
        let mut out = Vec::new();
        for i in 0..chunk.len as usize {
            let Some(w) = bytes.get(i..i + k) else {
                break;
            };
            if w.iter().all(|b| b"ACGTacgt".contains(b)) {
                let s = String::from_utf8_lossy(w).to_ascii_uppercase();
                out.push((s, chunk.start + i as u64));
            }
        }
        Ok(out)
    }

    fn drive(&mut self, w: WorkerId, ctx: &mut TickCtx<'_>) -> Result<(), RuntimeError> {
        if self.silenced.contains(&w) {
            return Ok(());
        }
        if !self.pool.is_registered(w) {
            self.pool.register(w);
        }
        let mut left = self.rates.get(&w).copied().unwrap_or(self.batch);
        let stalled = left == 0;
        let mut out: LMap<String, LSet<u64>> = LMap::new();
        loop {
            if left == 0 && !stalled {
                break;
            }
            if !self.cursors.contains_key(&w) {
                let Some(a) = self
                    .pool
                    .next(w)
                    .map_err(|e| RuntimeError::Driver(e.to_string()))?
                else {
                    break;
                };
                let kind = if a.attempt == 0 {
                    EventKind::Assign
                } else {
                    EventKind::Reassign
                };
                ctx.log(kind, None, Some(w), Some(a.chunk.token_id), None);
                let mut windows = self.windows(&a.chunk)?;
                if self.sabotage == Some(Sabotage::LoseChunk)
                    && a.chunk.index == 0
                    && a.attempt == 0
                {
                    windows.clear();
                }
                self.cursors.insert(
                    w,
                    Cursor {
                        chunk: a.chunk,
                        windows,
                        pos: 0,
                        idle: 0,
                    },
                );
            }
            let Some(c) = self.cursors.get_mut(&w) else {
                break;
            };
            if stalled {
                c.idle += 1;
                if self.silence_limit.is_some_and(|lim| c.idle >= lim) {
                    self.cursors.remove(&w);
                    self.silenced.insert(w);
                    let _ = self.pool.fail(w);
                    ctx.log(EventKind::Fail, Some(w), None, None, None);
                }
                break;
            }
            let n = left.min(c.windows.len() - c.pos);
            for (kmer, off) in &c.windows[c.pos..c.pos + n] {
                out.merge_key(kmer.clone(), &LSet::singleton(*off));
            }
            c.pos += n;
            c.idle = 0;
            left -= n;
            if c.pos == c.windows.len() {
                let chunk = c.chunk;
                self.cursors.remove(&w);
                self.pool
                    .complete(w, &chunk)
                    .map_err(|e| RuntimeError::Driver(e.to_string()))?;
                ctx.log(
                    EventKind::Complete,
                    None,
                    Some(w),
                    Some(chunk.token_id),
                    None,
                );
            }
        }
        if !out.is_empty() {
            ctx.insert(w, &self.table, &out)?;
        }
        Ok(())
    }
}

impl Driver for IngestDriver {
    fn before_tick(&mut self, ctx: &mut TickCtx<'_>) -> Result<(), RuntimeError> {
        let active = ctx.active().to_vec();
        for w in active {
            self.drive(w, ctx)?;
        }
        Ok(())
    }

    fn on_join(&mut self, worker: WorkerId, ctx: &mut TickCtx<'_>) {
        self.pool.register(worker);
        if let Some(hook) = self.join_hook.as_mut() {
            hook(worker, ctx);
        }
    }

    fn on_fail(&mut self, worker: WorkerId, _ctx: &mut TickCtx<'_>) {
        self.cursors.remove(&worker);
        let _ = self.pool.fail(worker);
    }

    fn is_idle(&self) -> bool {
        self.pool.is_done()
    }
}
