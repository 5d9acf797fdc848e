//! Deterministic single-threaded simulator for a cluster of workers.
//!
//! Every worker runs the same [`Program`]. Time advances in ticks; within a
//! tick a worker applies deferred merges from the previous tick, merges the
//! envelopes that arrive, runs its `<=` rules to fixpoint stratum by
//! stratum, queues its `<+` rules for the next tick, and ships its scratch
//! tables over channels. Envelopes travel through a [`SimNetwork`] that
//! delays, reorders, duplicates and drops them under a seeded PRNG, so a
//! run is a pure function of its program, inputs, seed and fault plan.

mod log;
mod network;
mod program;
mod sim;

use std::collections::HashSet;
use std::fmt;

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{DynLattice, LatticeError};
use crate::tables::dataflow::Cycle;

pub use log::{Event, EventKind, EventLog};
pub use network::{DeliverySchedule, NetworkCondition, SimNetwork, BACKOFF_BASE, BACKOFF_CAP};
pub use program::{
    ChannelDecl, Outgoing, Persistence, Program, RouteCtx, RuleDecl, Tables, Timing,
};
pub use sim::{Driver, FaultPlan, IdleDriver, RunStats, Simulation, TickCtx};

pub const DEFAULT_TICK_CAP: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkerId(pub u32);

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A unit of data in transit. `token_id` names the data, `use_id` names
/// this particular send of it.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub token_id: u64,
    pub use_id: u64,
    pub src: WorkerId,
    pub dst: WorkerId,
    pub channel: usize,
    pub payload: Box<dyn DynLattice>,
    pub send_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("stratification error: {cycle} merges into its own input within one tick")]
pub struct StratificationError {
    pub cycle: Cycle,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Stratification(#[from] StratificationError),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("channel `{channel}` reads `{table}`, which is not a scratch table")]
    ChannelSource { channel: String, table: String },
    #[error("unknown worker {0}")]
    UnknownWorker(WorkerId),
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("{name} must be within [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("no quiescence after {0} ticks")]
    Divergence(u64),
    #[error("driver failed: {0}")]
    Driver(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Seeded source of 64-bit identifiers. Every id it hands out is checked
/// against all earlier ones, so ids are unique within a run.
#[derive(Debug)]
pub struct IdGen {
    rng: ChaCha8Rng,
    issued: HashSet<u64>,
    collisions: u64,
}

impl IdGen {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self {
            rng,
            issued: HashSet::new(),
            collisions: 0,
        }
    }

    pub fn fresh(&mut self) -> u64 {
        loop {
            let id = self.rng.next_u64();
            if self.issued.insert(id) {
                return id;
            }
            self.collisions += 1;
        }
    }

    /// Draws that hit an already issued id and were redrawn.
    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    pub fn issued(&self) -> usize {
        self.issued.len()
    }
}
