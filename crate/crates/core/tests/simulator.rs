//! Whole-day invariants checked against the event log.

use std::collections::BTreeMap;

use mfdispatch::harness::{make_dispatcher, simulate_day, DayRecord, DispatcherKind, ExperimentConfig};
use mfdispatch::rngs::substream;
use mfdispatch::simcore::{Event, EventLog, Simulator};

fn day(preset: &str, kind: DispatcherKind, seed: u64) -> (Simulator, DayRecord) {
    let cfg = ExperimentConfig::preset(preset).unwrap().with_dispatcher(kind);
    let mut d = make_dispatcher(&cfg, kind, None).unwrap();
    let mut rng = substream(seed, "selection");
    simulate_day(&cfg, d.as_mut(), seed, &mut rng, kind).unwrap()
}

#[derive(Default, Debug)]
struct Life {
    generated: u32,
    served: Option<(u32, u32, i64)>,
    cancelled: u32,
    expired: u32,
    completed: Option<(u32, u32, i64)>,
}

fn check_day(sim: &Simulator, rec: &DayRecord) {
    let fleet = sim.config().fleet_size as u32;
    assert_eq!(rec.history.len(), sim.config().steps_per_day as usize);
    for m in &rec.history {
        assert_eq!(m.idle + m.on_trip + m.offline, fleet, "step {}", m.step);
    }

    let mut lives: BTreeMap<u64, Life> = BTreeMap::new();
    for e in sim.log().events() {
        match *e {
            Event::Generated { order, .. } => lives.entry(order.0).or_default().generated += 1,
            Event::Served { step, driver, order, price_cents, .. } => {
                let l = lives.get_mut(&order.0).expect("served before generated");
                assert!(l.served.is_none(), "order {} served twice", order.0);
                l.served = Some((step, driver.0, price_cents));
            }
            Event::Cancelled { order, .. } => lives.get_mut(&order.0).unwrap().cancelled += 1,
            Event::Expired { order, .. } => lives.get_mut(&order.0).unwrap().expired += 1,
            Event::Completed { step, driver, order, price_cents } => {
                let l = lives.get_mut(&order.0).unwrap();
                let (s, d, p) = l.served.expect("completed without being served");
                assert!(step > s && d == driver.0 && p == price_cents);
                l.completed = Some((step, driver.0, price_cents));
            }
        }
    }
    for (id, l) in &lives {
        assert_eq!(l.generated, 1, "order {id}");
        let endings = u32::from(l.served.is_some()) + l.cancelled + l.expired;
        assert!(endings <= 1, "order {id} ended {endings} times");
    }

    let count = |f: fn(&Life) -> bool| lives.values().filter(|l| f(l)).count() as u64;
    let s = rec.summary().unwrap();
    assert_eq!(s.orders_generated, lives.len() as u64);
    assert_eq!(s.orders_served, count(|l| l.served.is_some()));
    assert_eq!(s.orders_cancelled, count(|l| l.cancelled > 0));
    assert_eq!(s.orders_expired, count(|l| l.expired > 0));
    let recount: i64 = lives.values().filter_map(|l| l.completed.map(|c| c.2)).sum();
    assert_eq!(s.gmv_cents, recount);
    assert!((0.0..=1.0).contains(&s.orr));

    let income: i64 = sim.state().drivers.iter().map(|d| d.income_cents).sum();
    assert_eq!(income, recount);
}

#[test]
fn grid_days_conserve_drivers_orders_and_money() {
    for kind in [DispatcherKind::Ran, DispatcherKind::Res, DispatcherKind::Rev, DispatcherKind::Hod] {
        for seed in [1, 2] {
            let (sim, rec) = day("two-zone", kind, seed);
            check_day(&sim, &rec);
        }
    }
}

#[test]
fn coordinate_days_conserve_drivers_orders_and_money() {
    for kind in [DispatcherKind::Ran, DispatcherKind::Hod] {
        let (sim, rec) = day("coordinate", kind, 3);
        check_day(&sim, &rec);
        assert!(rec.summary().unwrap().orders_cancelled > 0);
    }
}

#[test]
fn event_log_round_trips_through_jsonl() {
    let (sim, _) = day("two-zone", DispatcherKind::Res, 4);
    let mut buf = Vec::new();
    sim.log().write_jsonl(&mut buf).unwrap();
    let back = EventLog::read_jsonl(buf.as_slice()).unwrap();
    assert_eq!(back.events(), sim.log().events());
}
