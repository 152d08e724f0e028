//! Fixed-length feature vectors for observations and candidate orders.

use std::f64::consts::TAU;

use crate::hexworld::Geometry;
use crate::scalar::Scalar;
use crate::simcore::{Observation, Order, STEPS_PER_DAY};

pub const OBS_DIM: usize = 5;
pub const ACTOR_ACTION_DIM: usize = 4;
pub const CRITIC_ACTION_DIM: usize = 3;

/// `[x, y, sin(tod), cos(tod), on_trip]`, time of day as a phase.
pub fn observation_embedding<T: Scalar>(obs: &Observation, geometry: &Geometry) -> Vec<T> {
    let p = geometry.position(&obs.location);
    let phase = TAU * f64::from(obs.step % STEPS_PER_DAY) / f64::from(STEPS_PER_DAY);
    [p.x, p.y, phase.sin(), phase.cos(), if obs.on_trip { 1.0 } else { 0.0 }]
        .into_iter()
        .map(T::lit)
        .collect()
}

/// Actor input for an order: normalized origin and destination.
pub fn actor_action_embedding<T: Scalar>(order: &Order, geometry: &Geometry) -> Vec<T> {
    let o = geometry.position(&order.origin);
    let d = geometry.position(&order.destination);
    [o.x, o.y, d.x, d.y].into_iter().map(T::lit).collect()
}

/// Critic input for an order: normalized destination and pick-up distance
/// as a fraction of the map width.
pub fn critic_action_embedding<T: Scalar>(order: &Order, pickup_km: f64, geometry: &Geometry) -> Vec<T> {
    let d = geometry.position(&order.destination);
    let pk = (pickup_km / geometry.map_width_km).clamp(0.0, 1.0);
    [d.x, d.y, pk].into_iter().map(T::lit).collect()
}

/// Squashes a mean action into `[0, 1)` for use as a network input.
pub fn mean_action_feature<T: Scalar>(mean_action: f64) -> T {
    T::lit(mean_action / (1.0 + mean_action))
}

/// Both embeddings of one candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub actor: Vec<T>,
    pub critic: Vec<T>,
}
