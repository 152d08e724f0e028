use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hexworld::Location;
use crate::simcore::{DriverId, DriverStatus, Simulator};

/// Drivers converging on a neighborhood per order available there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeanAction {
    /// Idle drivers in the neighborhood (the agent included) plus drivers
    /// whose trips end there at the next clock tick.
    pub arriving: u32,
    /// Orders available to the agent.
    pub orders: u32,
}

impl MeanAction {
    /// `arriving / max(orders, 1)`.
    pub fn value(&self) -> f64 {
        f64::from(self.arriving) / f64::from(self.orders.max(1))
    }
}

/// Mean action of an online driver. The neighborhood is the driver's cell
/// in grid mode and a disc of twice the receiving radius otherwise.
pub fn mean_action(sim: &Simulator, driver: DriverId) -> Result<MeanAction> {
    let state = sim.state();
    let me = state.driver(driver)?;
    if me.status == DriverStatus::Offline {
        return Err(domain(format!("driver {} is offline", driver.0)));
    }
    let reach = 2.0 * sim.config().receive_radius;
    let near = |loc: &Location| match (me.location, loc) {
        (Location::Cell(a), Location::Cell(b)) => a == *b,
        (Location::Point(a), Location::Point(b)) => a.euclid(b) <= reach,
        _ => false,
    };
    let next_tick = state.step + 1;
    let mut arriving = 0u32;
    for d in &state.drivers {
        let counts = match d.status {
            DriverStatus::Idle => near(&d.location),
            DriverStatus::OnTrip => {
                d.trip_end_step == Some(next_tick)
                    && d.current_order
                        .and_then(|o| state.orders.get(&o))
                        .is_some_and(|o| near(&o.destination))
            }
            DriverStatus::Offline => false,
        };
        arriving += u32::from(counts);
    }
    let orders = if me.status == DriverStatus::Idle {
        sim.candidate_orders(driver)?.len() as u32
    } else {
        0
    };
    Ok(MeanAction { arriving, orders })
}
