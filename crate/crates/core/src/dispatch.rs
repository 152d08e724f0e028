//! The dispatcher interface and the day loop shared by every policy.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::simcore::{Assignment, DriverId, OrderId, Simulator, StepOutcome};

pub trait Dispatcher {
    fn name(&self) -> &str;

    /// Chooses a conflict-free assignment for the current dispatch window.
    fn dispatch(&mut self, sim: &Simulator, rng: &mut ChaCha8Rng) -> Result<Assignment>;

    /// Called after the simulator has applied the assignment.
    fn after_step(&mut self, _sim: &Simulator, _outcome: &StepOutcome, _rng: &mut ChaCha8Rng) -> Result<()> {
        Ok(())
    }

    /// Called once the day is over.
    fn end_episode(&mut self, _sim: &Simulator, _rng: &mut ChaCha8Rng) -> Result<()> {
        Ok(())
    }
}

/// Candidate orders of every idle driver that has at least one.
pub fn candidate_map(sim: &Simulator) -> Result<BTreeMap<DriverId, Vec<OrderId>>> {
    let mut out = BTreeMap::new();
    for d in sim.state().idle_drivers() {
        let c = sim.candidate_orders(d.id)?;
        if !c.is_empty() {
            out.insert(d.id, c);
        }
    }
    Ok(out)
}

/// Runs the simulator to the end of the day under `dispatcher`.
pub fn run_day<D: Dispatcher + ?Sized>(sim: &mut Simulator, dispatcher: &mut D, rng: &mut ChaCha8Rng) -> Result<()> {
    while !sim.is_done() {
        sim.begin_step()?;
        let a = dispatcher.dispatch(sim, rng)?;
        let out = sim.step(&a)?;
        dispatcher.after_step(sim, &out, rng)?;
    }
    dispatcher.end_episode(sim, rng)
}
