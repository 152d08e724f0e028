//! The order-dispatching Markov game: entities, order generation, candidate
//! sets, rewards, conflict resolution, transitions and metrics.

pub mod conflict;
pub mod demand;
pub mod events;
pub mod metrics;
pub mod world;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hexworld::Location;

pub use conflict::resolve_conflicts;
pub use demand::{generate_orders, DemandModel, FareModel, ReplayDemand, SyntheticDemand};
pub use events::{Event, EventLog};
pub use metrics::{metrics_report, MetricsSummary};
pub use world::{maybe_cancel, update_presence, SimConfig, Simulator, StepOutcome, WorldState};

/// Minutes per dispatch step.
pub const STEP_MINUTES: f64 = 10.0;
/// Dispatch steps per simulated day.
pub const STEPS_PER_DAY: u32 = 144;
pub const STEPS_PER_HOUR: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DriverId(pub u32);

impl DriverId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Grid,
    Coordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderStatus {
    Open,
    Assigned,
    Serving,
    Completed,
    Cancelled,
    Expired,
}

impl OrderStatus {
    /// Legal lifecycle edges.
    pub fn can_become(self, next: OrderStatus) -> bool {
        use OrderStatus::*;
        matches!(
            (self, next),
            (Open, Assigned) | (Open, Expired) | (Assigned, Serving) | (Assigned, Cancelled) | (Serving, Completed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub origin: Location,
    pub destination: Location,
    /// Price in integer cents so that revenue sums are exact.
    pub price_cents: i64,
    pub duration_steps: u32,
    pub created_step: u32,
    pub status: OrderStatus,
}

impl Order {
    pub fn price(&self) -> f64 {
        self.price_cents as f64 / 100.0
    }
}

pub fn to_cents(price: f64) -> i64 {
    (price * 100.0).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverStatus {
    Idle,
    OnTrip,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Driver {
    pub id: DriverId,
    pub location: Location,
    pub status: DriverStatus,
    pub trip_end_step: Option<u32>,
    pub current_order: Option<OrderId>,
    pub income_cents: i64,
}

impl Driver {
    pub fn is_available(&self) -> bool {
        self.status == DriverStatus::Idle
    }

    pub fn observation(&self, step: u32) -> Observation {
        Observation {
            location: self.location,
            step,
            on_trip: self.status == DriverStatus::OnTrip,
        }
    }
}

/// What an agent sees: location, timestamp and on-trip flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub location: Location,
    pub step: u32,
    pub on_trip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    /// Weight of the destination potential.
    pub alpha_dp: f64,
    /// Weight of the pick-up time (in steps).
    pub alpha_pickup: f64,
}

impl RewardWeights {
    pub fn grid() -> Self {
        Self {
            alpha_dp: 0.01,
            alpha_pickup: 0.0,
        }
    }

    pub fn coordinate() -> Self {
        Self {
            alpha_dp: 0.01,
            alpha_pickup: -0.1,
        }
    }
}

/// A conflict-free driver to order mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment(pub BTreeMap<DriverId, OrderId>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, d: DriverId) -> Option<OrderId> {
        self.0.get(&d).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (DriverId, OrderId)> + '_ {
        self.0.iter().map(|(d, o)| (*d, *o))
    }

    /// True when no order is held by two drivers.
    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.0.values().all(|o| seen.insert(*o))
    }
}

/// Per-step accumulators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u32,
    pub hour: u32,
    /// Revenue of trips completed during this step, in cents.
    pub gmv_cents: i64,
    pub orders_generated: u64,
    pub orders_served: u64,
    pub orders_cancelled: u64,
    pub orders_expired: u64,
    pub dp_sum: i64,
    pub pickup_minutes_sum: f64,
    pub idle: u32,
    pub on_trip: u32,
    pub offline: u32,
}

impl StepMetrics {
    pub fn gmv(&self) -> f64 {
        self.gmv_cents as f64 / 100.0
    }
}
