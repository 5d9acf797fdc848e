//! Confluence and delivery guarantees of the simulator.

use std::collections::BTreeSet;

use bloomsim::lattice::{LMax, LSet};
use bloomsim::runtime::{
    DeliverySchedule, Driver, EventKind, FaultPlan, NetworkCondition, Outgoing, Program,
    RuntimeError, Simulation, TickCtx, WorkerId,
};
use bloomsim::tables::EdgeKind;
use proptest::prelude::*;

/// Every worker broadcasts what it produces; everyone keeps the union.
fn gossip() -> Program {
    Program::new()
        .scratch("outbox", LSet::<u64>::new())
        .persistent("seen", LSet::<u64>::new())
        .channel("all", "outbox", "seen", |ctx, s: &LSet<u64>| {
            ctx.members
                .iter()
                .flat_map(|&dst| {
                    s.iter().map(move |&x| Outgoing {
                        dst,
                        token_id: x,
                        payload: Box::new(LSet::singleton(x)),
                    })
                })
                .collect()
        })
}

/// Worker `w` produces `w*100 + i` for `i` in `0..per_worker`, one per tick.
struct Producer {
    per_worker: u64,
    tick: u64,
}

impl Driver for Producer {
    fn before_tick(&mut self, ctx: &mut TickCtx<'_>) -> Result<(), RuntimeError> {
        if self.tick < self.per_worker {
            for w in ctx.active().to_vec() {
                let x = u64::from(w.0) * 100 + self.tick;
                ctx.insert(w, "outbox", &LSet::singleton(x))?;
            }
        }
        self.tick += 1;
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.tick >= self.per_worker
    }
}

fn expected(workers: u32, per_worker: u64) -> BTreeSet<u64> {
    (0..workers)
        .flat_map(|w| (0..per_worker).map(move |i| u64::from(w) * 100 + i))
        .collect()
}

fn run(schedule: DeliverySchedule, faults: FaultPlan) -> Simulation {
    let mut sim = Simulation::new(gossip(), 3, schedule)
        .unwrap()
        .with_faults(faults);
    sim.run_to_quiescence(&mut Producer {
        per_worker: 6,
        tick: 0,
    })
    .unwrap();
    sim
}

fn seen(sim: &Simulation, w: u32) -> BTreeSet<u64> {
    sim.table::<LSet<u64>>(WorkerId(w), "seen")
        .unwrap()
        .as_set()
        .clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_schedule_reaches_the_same_state(
        seed in any::<u64>(),
        dup in 0.0f64..0.6,
        window in 1u64..8,
        drop in 0.0f64..0.5,
    ) {
        let sim = run(DeliverySchedule::adversarial(seed, dup, window, drop), FaultPlan::default());
        let want = expected(3, 6);
        for w in 0..3 {
            prop_assert_eq!(seen(&sim, w), want.clone());
        }
        let stats = sim.stats();
        prop_assert!(stats.deliveries >= stats.sends);
    }
}

#[test]
fn duplicates_are_absorbed() {
    let sim = run(
        DeliverySchedule::adversarial(5, 0.9, 3, 0.0),
        FaultPlan::default(),
    );
    let stats = sim.stats();
    assert!(stats.duplicates > 0);
    assert_eq!(stats.deliveries, stats.sends + stats.duplicates);
    assert_eq!(seen(&sim, 1), expected(3, 6));
}

#[test]
fn drops_are_retried_until_delivered() {
    let sim = run(
        DeliverySchedule::adversarial(6, 0.0, 1, 0.6),
        FaultPlan::default(),
    );
    assert!(sim.stats().drops > 0);
    assert_eq!(seen(&sim, 2), expected(3, 6));
}

#[test]
fn partition_holds_traffic_until_heal() {
    let cut = NetworkCondition::partitioned([(WorkerId(0), WorkerId(1))]);
    let faults = FaultPlan {
        partitions: vec![(1, cut), (20, NetworkCondition::Healthy)],
        ..FaultPlan::default()
    };
    let sim = run(DeliverySchedule::in_order(1), faults);
    assert!(sim.log().count(EventKind::Hold) > 0);
    assert!(sim.log().count(EventKind::Release) > 0);
    let holds_before_heal = sim
        .log()
        .of_kind(EventKind::Deliver)
        .filter(|e| e.tick < 20 && e.src == Some(WorkerId(0)) && e.dst == Some(WorkerId(1)))
        .count();
    assert_eq!(holds_before_heal, 0);
    assert_eq!(seen(&sim, 1), expected(3, 6));
}

#[test]
fn identical_seeds_give_identical_logs() {
    let s = DeliverySchedule::adversarial(77, 0.3, 5, 0.1);
    let a = run(s.clone(), FaultPlan::default());
    let b = run(s, FaultPlan::default());
    assert_eq!(a.log().render(), b.log().render());
    let c = run(
        DeliverySchedule::adversarial(78, 0.3, 5, 0.1),
        FaultPlan::default(),
    );
    assert_ne!(a.log().render(), c.log().render());
}

#[test]
fn joiner_receives_later_traffic() {
    let faults = FaultPlan {
        joins: vec![2],
        ..FaultPlan::default()
    };
    let mut sim = Simulation::new(gossip(), 2, DeliverySchedule::in_order(3))
        .unwrap()
        .with_faults(faults);
    sim.run_to_quiescence(&mut Producer {
        per_worker: 8,
        tick: 0,
    })
    .unwrap();
    assert_eq!(sim.members(), &[WorkerId(0), WorkerId(1), WorkerId(2)]);
    assert_eq!(sim.owners(), &[WorkerId(0), WorkerId(1)]);
    let late = seen(&sim, 2);
    assert!(late.contains(&7) && late.contains(&107) && late.contains(&207));
    assert_eq!(sim.log().count(EventKind::Join), 1);
}

#[test]
fn negated_instant_cycle_is_rejected() {
    let p = Program::new()
        .persistent("a", LMax::default())
        .persistent("b", LMax::default())
        .instant("a", &[("b", EdgeKind::Negation)], |_| LMax(0))
        .instant("b", &[("a", EdgeKind::Monotone)], |_| LMax(0));
    let err = Simulation::new(p, 1, DeliverySchedule::in_order(0))
        .err()
        .unwrap();
    assert!(matches!(err, RuntimeError::Stratification(_)));
}

#[test]
fn deferring_the_negated_edge_is_accepted() {
    let p = Program::new()
        .persistent("a", LMax::default())
        .persistent("b", LMax::default())
        .deferred("a", &[("b", EdgeKind::Negation)], |_| LMax(0))
        .instant("b", &[("a", EdgeKind::Monotone)], |_| LMax(0));
    assert!(Simulation::new(p, 1, DeliverySchedule::in_order(0)).is_ok());
}
