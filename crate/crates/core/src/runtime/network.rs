use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::log::{EventKind, EventLog};
use super::{Envelope, RuntimeError, WorkerId};

pub const BACKOFF_BASE: u64 = 2;
pub const BACKOFF_CAP: u64 = 32;

/// How the simulated network mistreats envelopes. Dropped envelopes are
/// always retried, so delivery is at-least-once whenever `drop_prob < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliverySchedule {
    pub seed: u64,
    pub duplicate_prob: f64,
    /// Largest send-to-delivery delay in ticks (values below 1 mean 1).
    pub reorder_window: u64,
    pub drop_prob: f64,
}

impl DeliverySchedule {
    /// No duplicates, no drops, every envelope arrives on the next tick.
    pub fn in_order(seed: u64) -> Self {
        Self {
            seed,
            duplicate_prob: 0.0,
            reorder_window: 1,
            drop_prob: 0.0,
        }
    }

    pub fn adversarial(
        seed: u64,
        duplicate_prob: f64,
        reorder_window: u64,
        drop_prob: f64,
    ) -> Self {
        Self {
            seed,
            duplicate_prob,
            reorder_window,
            drop_prob,
        }
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        for (name, value) in [
            ("duplicate_prob", self.duplicate_prob),
            ("drop_prob", self.drop_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(RuntimeError::Probability { name, value });
            }
        }
        Ok(())
    }
}

/// Reachability between workers. Partitions are symmetric.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkCondition {
    #[default]
    Healthy,
    Partitioned(BTreeSet<(WorkerId, WorkerId)>),
}

impl NetworkCondition {
    /// An empty pair list is a healthy network.
    pub fn partitioned(pairs: impl IntoIterator<Item = (WorkerId, WorkerId)>) -> Self {
        let set: BTreeSet<_> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        if set.is_empty() {
            NetworkCondition::Healthy
        } else {
            NetworkCondition::Partitioned(set)
        }
    }

    pub fn is_healthy(&self) -> bool {
        matches!(self, NetworkCondition::Healthy)
    }

    pub fn separates(&self, a: WorkerId, b: WorkerId) -> bool {
        match self {
            NetworkCondition::Healthy => false,
            NetworkCondition::Partitioned(pairs) => pairs.contains(&(a.min(b), a.max(b))),
        }
    }
}

#[derive(Debug, Clone)]
struct InFlight {
    attempt: u32,
    env: Envelope,
}

/// Seeded in-memory network: random delay within the reorder window,
/// random duplication, random drops retried with exponential backoff, and
/// envelopes between partitioned workers held until the partition heals.
#[derive(Debug)]
pub struct SimNetwork {
    schedule: DeliverySchedule,
    rng: ChaCha8Rng,
    queue: BTreeMap<(u64, u64), InFlight>,
    held: Vec<InFlight>,
    condition: NetworkCondition,
    next_seq: u64,
}

impl SimNetwork {
    pub fn new(schedule: DeliverySchedule, rng: ChaCha8Rng) -> Self {
        Self {
            schedule,
            rng,
            queue: BTreeMap::new(),
            held: Vec::new(),
            condition: NetworkCondition::Healthy,
            next_seq: 0,
        }
    }

    pub fn schedule(&self) -> &DeliverySchedule {
        &self.schedule
    }

    pub fn condition(&self) -> &NetworkCondition {
        &self.condition
    }

    /// Envelopes queued or held.
    pub fn in_flight(&self) -> usize {
        self.queue.len() + self.held.len()
    }

    pub fn is_empty(&self) -> bool {
        self.in_flight() == 0
    }

    fn enqueue(&mut self, due: u64, item: InFlight) {
        self.queue.insert((due, self.next_seq), item);
        self.next_seq += 1;
    }

    fn delay(&mut self) -> u64 {
        self.rng.gen_range(1..=self.schedule.reorder_window.max(1))
    }

    pub fn send(&mut self, env: Envelope, now: u64, log: &mut EventLog) {
        log.record(
            now,
            EventKind::Send,
            Some(env.src),
            Some(env.dst),
            Some(env.token_id),
            Some(env.use_id),
        );
        if self.rng.gen_bool(self.schedule.duplicate_prob) {
            log.record(
                now,
                EventKind::Dup,
                Some(env.src),
                Some(env.dst),
                Some(env.token_id),
                Some(env.use_id),
            );
            let d = self.delay();
            self.enqueue(
                now + d,
                InFlight {
                    attempt: 0,
                    env: env.clone(),
                },
            );
        }
        let d = self.delay();
        self.enqueue(now + d, InFlight { attempt: 0, env });
    }

    /// Removes and returns every envelope that arrives at `now`.
    pub fn take_due(&mut self, now: u64, log: &mut EventLog) -> Vec<Envelope> {
        let later = self.queue.split_off(&(now + 1, 0));
        let due = std::mem::replace(&mut self.queue, later);
        let mut out = Vec::new();
        for (_, mut item) in due {
            let e = &item.env;
            let ids = (Some(e.src), Some(e.dst), Some(e.token_id), Some(e.use_id));
            if self.condition.separates(e.src, e.dst) {
                log.record(now, EventKind::Hold, ids.0, ids.1, ids.2, ids.3);
                self.held.push(item);
            } else if self.rng.gen_bool(self.schedule.drop_prob) {
                log.record(now, EventKind::Drop, ids.0, ids.1, ids.2, ids.3);
                let backoff = BACKOFF_BASE.saturating_pow(item.attempt).min(BACKOFF_CAP);
                item.attempt += 1;
                self.enqueue(now + backoff, item);
            } else {
                log.record(now, EventKind::Deliver, ids.0, ids.1, ids.2, ids.3);
                out.push(item.env);
            }
        }
        out
    }

    /// Changes reachability. Held envelopes whose pair is reachable again
    /// are re-queued for the next tick.
    pub fn set_condition(&mut self, condition: NetworkCondition, now: u64, log: &mut EventLog) {
        self.condition = condition;
        let held = std::mem::take(&mut self.held);
        for item in held {
            let e = &item.env;
            if self.condition.separates(e.src, e.dst) {
                self.held.push(item);
            } else {
                log.record(
                    now,
                    EventKind::Release,
                    Some(e.src),
                    Some(e.dst),
                    Some(e.token_id),
                    Some(e.use_id),
                );
                self.enqueue(now + 1, item);
            }
        }
    }
}
