use std::collections::{BTreeMap, BTreeSet};

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hexworld::{Geometry, GridId, HexGrid, Location};
use crate::rngs::substream;
use crate::simcore::demand::{generate_orders, jitter_in_cell, DemandModel};
use crate::simcore::events::{Event, EventLog};
use crate::simcore::{
    Assignment, Driver, DriverId, DriverStatus, Mode, Order, OrderId, OrderStatus, RewardWeights, StepMetrics,
    STEPS_PER_DAY, STEPS_PER_HOUR, STEP_MINUTES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub mode: Mode,
    pub geometry: Geometry,
    pub fleet_size: usize,
    pub steps_per_day: u32,
    /// Steps an unserved order stays open.
    pub order_patience: u32,
    /// Bootstrapping ratio applied to the demand model.
    pub p_sample: f64,
    /// Per-step probability that an offline driver comes online.
    pub on_rate: f64,
    /// Per-step probability that an idle driver goes offline.
    pub off_rate: f64,
    /// Fraction of the fleet online at the start of a day.
    pub initial_online: f64,
    /// Relative weight of each cell for initial placement; empty means uniform.
    pub placement_weights: Vec<f64>,
    /// Drivers coming back online reappear at a placement-weighted cell
    /// instead of where they went offline.
    pub resample_on_reentry: bool,
    pub reward: RewardWeights,
    /// Order receiving radius in normalized map units (coordinate mode).
    pub receive_radius: f64,
    pub pickup_speed_kmh: f64,
    /// Cancellation probability per minute of pick-up time.
    pub cancel_slope: f64,
}

impl SimConfig {
    pub fn grid(geometry: Geometry, fleet_size: usize) -> Self {
        Self {
            mode: Mode::Grid,
            geometry,
            fleet_size,
            steps_per_day: STEPS_PER_DAY,
            order_patience: 1,
            p_sample: 1.0,
            on_rate: 0.0,
            off_rate: 0.0,
            initial_online: 1.0,
            placement_weights: Vec::new(),
            resample_on_reentry: false,
            reward: RewardWeights::grid(),
            receive_radius: 0.1,
            pickup_speed_kmh: 30.0,
            cancel_slope: 0.0,
        }
    }

    pub fn coordinate(geometry: Geometry, fleet_size: usize) -> Self {
        Self {
            mode: Mode::Coordinate,
            reward: RewardWeights::coordinate(),
            cancel_slope: 0.02,
            ..Self::grid(geometry, fleet_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry.grid;
        HexGrid::new(g.rows(), g.cols(), g.cell_km()).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.geometry.map_width_km.is_finite() && self.geometry.map_width_km > 0.0) {
            return Err(Error::Config("map width must be positive".into()));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.on_rate) || !unit(self.off_rate) || !unit(self.initial_online) || !unit(self.p_sample) {
            return Err(Error::Config("rates and ratios must lie in [0, 1]".into()));
        }
        if self.order_patience == 0 {
            return Err(Error::Config("order patience must be at least one step".into()));
        }
        if !self.placement_weights.is_empty() && self.placement_weights.len() != self.geometry.grid.len() {
            return Err(Error::Config("placement weights must cover every cell".into()));
        }
        if self.mode == Mode::Coordinate && !(self.receive_radius > 0.0 && self.pickup_speed_kmh > 0.0) {
            return Err(Error::Config("coordinate mode needs a positive radius and pick-up speed".into()));
        }
        if !(self.cancel_slope >= 0.0) {
            return Err(Error::Config("cancellation slope must be non-negative".into()));
        }
        if !(self.reward.alpha_dp.is_finite() && self.reward.alpha_pickup.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        Ok(())
    }
}

/// The game state: clock, entity tables and per-cell tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub step: u32,
    pub mode: Mode,
    pub drivers: Vec<Driver>,
    /// Open and in-flight orders. Finished orders leave the table.
    pub orders: BTreeMap<OrderId, Order>,
    /// Open orders originating in each cell.
    pub demand: Vec<i64>,
    /// Idle online drivers in each cell.
    pub supply: Vec<i64>,
    /// Open order ids by origin cell, ascending.
    pub open_by_cell: Vec<Vec<OrderId>>,
    pub next_order_id: u64,
}

impl WorldState {
    pub fn new(mode: Mode, drivers: Vec<Driver>, cells: usize) -> Self {
        Self {
            step: 0,
            mode,
            drivers,
            orders: BTreeMap::new(),
            demand: vec![0; cells],
            supply: vec![0; cells],
            open_by_cell: vec![Vec::new(); cells],
            next_order_id: 0,
        }
    }

    /// Rebuilds the demand and supply tallies from the entity tables.
    pub fn recount(&mut self, geometry: &Geometry) {
        self.demand.iter_mut().for_each(|x| *x = 0);
        self.supply.iter_mut().for_each(|x| *x = 0);
        self.open_by_cell.iter_mut().for_each(Vec::clear);
        for o in self.orders.values().filter(|o| o.status == OrderStatus::Open) {
            let c = geometry.cell(&o.origin).0;
            self.demand[c] += 1;
            self.open_by_cell[c].push(o.id);
        }
        for d in self.drivers.iter().filter(|d| d.status == DriverStatus::Idle) {
            self.supply[geometry.cell(&d.location).0] += 1;
        }
    }

    /// `#DD - #DS` of a cell.
    pub fn gap(&self, cell: GridId) -> i64 {
        self.demand[cell.0] - self.supply[cell.0]
    }

    pub fn driver(&self, id: DriverId) -> Result<&Driver> {
        self.drivers
            .get(id.index())
            .ok_or_else(|| domain(format!("unknown driver {}", id.0)))
    }

    pub fn order(&self, id: OrderId) -> Result<&Order> {
        self.orders.get(&id).ok_or_else(|| domain(format!("unknown order {}", id.0)))
    }

    pub fn open_orders(&self) -> impl Iterator<Item = &Order> {
        self.orders.values().filter(|o| o.status == OrderStatus::Open)
    }

    pub fn idle_drivers(&self) -> impl Iterator<Item = &Driver> {
        self.drivers.iter().filter(|d| d.status == DriverStatus::Idle)
    }

    pub fn count_status(&self, status: DriverStatus) -> u32 {
        self.drivers.iter().filter(|d| d.status == status).count() as u32
    }
}

/// Destination potential of an open order: the destination's demand-supply
/// gap, counted only when the origin has more orders than drivers.
pub fn destination_potential(order: &Order, state: &WorldState, geometry: &Geometry) -> i64 {
    if state.gap(geometry.cell(&order.origin)) > 0 {
        state.gap(geometry.cell(&order.destination))
    } else {
        0
    }
}

/// `price + alpha_dp * DP + alpha_pickup * pickup_steps`.
pub fn reward_from_parts(price: f64, dp: i64, pickup_steps: f64, w: &RewardWeights) -> f64 {
    price + w.alpha_dp * dp as f64 + w.alpha_pickup * pickup_steps
}

pub fn reward(order: &Order, pickup_steps: f64, state: &WorldState, geometry: &Geometry, w: &RewardWeights) -> f64 {
    reward_from_parts(order.price(), destination_potential(order, state, geometry), pickup_steps, w)
}

/// Toggles driver presence. Returns the drivers that came online.
pub fn update_presence<R: Rng + ?Sized>(state: &mut WorldState, on_rate: f64, off_rate: f64, rng: &mut R) -> Vec<DriverId> {
    let mut came_online = Vec::new();
    for d in state.drivers.iter_mut() {
        match d.status {
            DriverStatus::Offline if on_rate > 0.0 => {
                if rng.random_bool(on_rate) {
                    d.status = DriverStatus::Idle;
                    came_online.push(d.id);
                }
            }
            DriverStatus::Idle if off_rate > 0.0 => {
                if rng.random_bool(off_rate) {
                    d.status = DriverStatus::Offline;
                }
            }
            _ => {}
        }
    }
    came_online
}

/// Cancels with probability `min(1, slope * pickup_minutes)`.
pub fn maybe_cancel<R: Rng + ?Sized>(pickup_minutes: f64, slope: f64, rng: &mut R) -> Result<bool> {
    if !(pickup_minutes >= 0.0 && slope >= 0.0) {
        return Err(domain("pick-up time and cancellation slope must be non-negative"));
    }
    let p = (slope * pickup_minutes).min(1.0);
    if p <= 0.0 {
        return Ok(false);
    }
    if p >= 1.0 {
        return Ok(true);
    }
    Ok(rng.random_bool(p))
}

/// One dispatched pair and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub driver: DriverId,
    pub order: OrderId,
    pub reward: f64,
    pub dp: i64,
    pub pickup_minutes: f64,
    pub cancelled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub step: u32,
    pub records: Vec<DispatchRecord>,
    pub metrics: StepMetrics,
}

impl StepOutcome {
    pub fn rewards(&self) -> BTreeMap<DriverId, f64> {
        self.records.iter().map(|r| (r.driver, r.reward)).collect()
    }
}

/// Owns one simulated day: world state, demand model, random substreams,
/// event log and metric history.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    demand: DemandModel,
    state: WorldState,
    placement: Option<WeightedIndex<f64>>,
    rng_demand: ChaCha8Rng,
    rng_presence: ChaCha8Rng,
    rng_cancel: ChaCha8Rng,
    log: EventLog,
    history: Vec<StepMetrics>,
    generated_this_step: u64,
}

impl Simulator {
    pub fn new(config: SimConfig, demand: DemandModel, seed: u64) -> Result<Self> {
        config.validate()?;
        demand.validate(&config.geometry)?;
        let cells = config.geometry.grid.len();
        let placement = if config.placement_weights.is_empty() {
            None
        } else {
            Some(
                WeightedIndex::new(&config.placement_weights)
                    .map_err(|e| Error::Config(format!("placement weights: {e}")))?,
            )
        };
        let mut rng_presence = substream(seed, "presence");
        let mut drivers = Vec::with_capacity(config.fleet_size);
        for i in 0..config.fleet_size {
            let cell = match &placement {
                Some(w) => GridId(w.sample(&mut rng_presence)),
                None => GridId(rng_presence.random_range(0..cells)),
            };
            let location = match config.mode {
                Mode::Grid => Location::Cell(cell),
                Mode::Coordinate => Location::Point(jitter_in_cell(&config.geometry, cell, &mut rng_presence)),
            };
            let online = config.initial_online >= 1.0 || rng_presence.random_bool(config.initial_online);
            drivers.push(Driver {
                id: DriverId(i as u32),
                location,
                status: if online { DriverStatus::Idle } else { DriverStatus::Offline },
                trip_end_step: None,
                current_order: None,
                income_cents: 0,
            });
        }
        let mut state = WorldState::new(config.mode, drivers, cells);
        state.recount(&config.geometry);
        Ok(Self {
            demand,
            state,
            placement,
            rng_demand: substream(seed, "demand"),
            rng_presence,
            rng_cancel: substream(seed, "cancellation"),
            log: EventLog::default(),
            history: Vec::new(),
            generated_this_step: 0,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn geometry(&self) -> &Geometry {
        &self.config.geometry
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn history(&self) -> &[StepMetrics] {
        &self.history
    }

    /// Swaps in a staged world state; tallies are rebuilt from its tables.
    pub fn replace_state(&mut self, mut state: WorldState) {
        state.recount(&self.config.geometry);
        self.state = state;
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.steps_per_day
    }

    /// Per-cell demand-supply gaps at the current instant.
    pub fn gap_snapshot(&self) -> Vec<i64> {
        self.state.demand.iter().zip(&self.state.supply).map(|(d, s)| d - s).collect()
    }

    /// Opens the dispatch window: presence changes, then new orders.
    pub fn begin_step(&mut self) -> Result<()> {
        let came_online = update_presence(
            &mut self.state,
            self.config.on_rate,
            self.config.off_rate,
            &mut self.rng_presence,
        );
        if self.config.resample_on_reentry {
            if let Some(w) = &self.placement {
                for id in came_online {
                    let cell = GridId(w.sample(&mut self.rng_presence));
                    let loc = match self.config.mode {
                        Mode::Grid => Location::Cell(cell),
                        Mode::Coordinate => {
                            Location::Point(jitter_in_cell(&self.config.geometry, cell, &mut self.rng_presence))
                        }
                    };
                    self.state.drivers[id.index()].location = loc;
                }
            }
        }
        let orders = generate_orders(
            &self.demand,
            &self.config.geometry,
            self.config.mode,
            self.state.step,
            self.config.p_sample,
            self.state.next_order_id,
            &mut self.rng_demand,
        )?;
        self.generated_this_step = orders.len() as u64;
        for o in orders {
            self.log.push(Event::Generated {
                step: self.state.step,
                order: o.id,
                price_cents: o.price_cents,
            });
            self.state.next_order_id = o.id.0 + 1;
            self.state.orders.insert(o.id, o);
        }
        self.state.recount(&self.config.geometry);
        Ok(())
    }

    fn within_reach(&self, driver: &Driver, order: &Order) -> bool {
        match (driver.location, order.origin) {
            (Location::Cell(a), Location::Cell(b)) => a == b,
            (Location::Point(a), Location::Point(b)) => a.euclid(&b) <= self.config.receive_radius,
            _ => false,
        }
    }

    /// Open orders a driver may take, ascending by id.
    pub fn candidate_orders(&self, driver: DriverId) -> Result<Vec<OrderId>> {
        let d = self.state.driver(driver)?;
        if d.status != DriverStatus::Idle {
            return Err(domain(format!("driver {} is not idle", driver.0)));
        }
        Ok(match d.location {
            Location::Cell(c) => self.state.open_by_cell[c.0].clone(),
            Location::Point(_) => self
                .state
                .open_orders()
                .filter(|o| self.within_reach(d, o))
                .map(|o| o.id)
                .collect(),
        })
    }

    pub fn destination_potential(&self, order: OrderId) -> Result<i64> {
        Ok(destination_potential(self.state.order(order)?, &self.state, &self.config.geometry))
    }

    /// Pick-up distance in km and time in minutes for a driver-order pair.
    pub fn pickup(&self, driver: DriverId, order: OrderId) -> Result<(f64, f64)> {
        let d = self.state.driver(driver)?;
        let o = self.state.order(order)?;
        match self.config.mode {
            Mode::Grid => Ok((0.0, 0.0)),
            Mode::Coordinate => {
                let km = self.config.geometry.distance(&d.location, &o.origin)?;
                Ok((km, km / self.config.pickup_speed_kmh * 60.0))
            }
        }
    }

    /// Applies a conflict-free assignment and advances the clock one step.
    pub fn step(&mut self, assignment: &Assignment) -> Result<StepOutcome> {
        if !assignment.is_injective() {
            return Err(domain("assignment gives one order to several drivers"));
        }
        for (d, o) in assignment.iter() {
            let driver = self.state.driver(d)?;
            let order = self.state.order(o)?;
            if driver.status != DriverStatus::Idle {
                return Err(domain(format!("driver {} is not idle", d.0)));
            }
            if order.status != OrderStatus::Open {
                return Err(domain(format!("order {} is not open", o.0)));
            }
            if !self.within_reach(driver, order) {
                return Err(domain(format!("order {} is outside driver {}'s receiving area", o.0, d.0)));
            }
        }

        let now = self.state.step;
        let mut metrics = StepMetrics {
            step: now,
            hour: (now / STEPS_PER_HOUR) % 24,
            orders_generated: self.generated_this_step,
            ..Default::default()
        };
        self.generated_this_step = 0;

        // Rewards use the tallies seen at dispatch time.
        let mut planned = Vec::with_capacity(assignment.len());
        for (d, o) in assignment.iter() {
            let dp = self.destination_potential(o)?;
            let (_, minutes) = self.pickup(d, o)?;
            planned.push((d, o, dp, minutes));
        }

        let mut records = Vec::with_capacity(planned.len());
        for (d, o, dp, minutes) in planned {
            let pickup_steps = minutes / STEP_MINUTES;
            let cancelled = self.config.mode == Mode::Coordinate
                && maybe_cancel(minutes, self.config.cancel_slope, &mut self.rng_cancel)?;
            let order = self.state.orders.get_mut(&o).expect("validated");
            order.status = OrderStatus::Assigned;
            let price = order.price();
            let price_cents = order.price_cents;
            let duration = order.duration_steps;
            if cancelled {
                order.status = OrderStatus::Cancelled;
                self.state.orders.remove(&o);
                metrics.orders_cancelled += 1;
                self.log.push(Event::Cancelled {
                    step: now,
                    driver: d,
                    order: o,
                    pickup_minutes: minutes,
                });
                records.push(DispatchRecord {
                    driver: d,
                    order: o,
                    reward: self.config.reward.alpha_pickup * pickup_steps,
                    dp,
                    pickup_minutes: minutes,
                    cancelled: true,
                });
                continue;
            }
            order.status = OrderStatus::Serving;
            let driver = &mut self.state.drivers[d.index()];
            driver.status = DriverStatus::OnTrip;
            driver.current_order = Some(o);
            driver.trip_end_step = Some(now + pickup_steps.ceil() as u32 + duration);
            metrics.orders_served += 1;
            metrics.dp_sum += dp;
            metrics.pickup_minutes_sum += minutes;
            self.log.push(Event::Served {
                step: now,
                driver: d,
                order: o,
                price_cents,
                dp,
                pickup_minutes: minutes,
            });
            records.push(DispatchRecord {
                driver: d,
                order: o,
                reward: reward_from_parts(price, dp, pickup_steps, &self.config.reward),
                dp,
                pickup_minutes: minutes,
                cancelled: false,
            });
        }

        self.state.step += 1;
        let t = self.state.step;

        for driver in self.state.drivers.iter_mut() {
            if driver.status == DriverStatus::OnTrip && driver.trip_end_step == Some(t) {
                let oid = driver.current_order.take().expect("on-trip driver holds an order");
                let mut order = self.state.orders.remove(&oid).expect("in-flight order");
                order.status = OrderStatus::Completed;
                driver.location = order.destination;
                driver.status = DriverStatus::Idle;
                driver.trip_end_step = None;
                driver.income_cents += order.price_cents;
                metrics.gmv_cents += order.price_cents;
                self.log.push(Event::Completed {
                    step: t,
                    driver: driver.id,
                    order: oid,
                    price_cents: order.price_cents,
                });
            }
        }

        let patience = self.config.order_patience;
        let expired: Vec<OrderId> = self
            .state
            .open_orders()
            .filter(|o| t - o.created_step >= patience)
            .map(|o| o.id)
            .collect();
        for oid in expired {
            self.state.orders.remove(&oid);
            metrics.orders_expired += 1;
            self.log.push(Event::Expired { step: t, order: oid });
        }

        self.state.recount(&self.config.geometry);
        metrics.idle = self.state.count_status(DriverStatus::Idle);
        metrics.on_trip = self.state.count_status(DriverStatus::OnTrip);
        metrics.offline = self.state.count_status(DriverStatus::Offline);
        self.history.push(metrics.clone());
        Ok(StepOutcome {
            step: now,
            records,
            metrics,
        })
    }
}

/// Brute-force recount of the tallies, for invariant checks.
pub fn recount_tallies(state: &WorldState, geometry: &Geometry) -> (Vec<i64>, Vec<i64>) {
    let cells = geometry.grid.len();
    let mut demand = vec![0; cells];
    let mut supply = vec![0; cells];
    for c in 0..cells {
        demand[c] = state
            .orders
            .values()
            .filter(|o| o.status == OrderStatus::Open && geometry.cell(&o.origin).0 == c)
            .count() as i64;
        supply[c] = state
            .drivers
            .iter()
            .filter(|d| d.status == DriverStatus::Idle && geometry.cell(&d.location).0 == c)
            .count() as i64;
    }
    (demand, supply)
}

/// Orders currently held by drivers; used to check that no order has two.
pub fn held_orders(state: &WorldState) -> Result<BTreeSet<OrderId>> {
    let mut seen = BTreeSet::new();
    for d in &state.drivers {
        if let Some(o) = d.current_order {
            if !seen.insert(o) {
                return Err(domain(format!("order {} held by two drivers", o.0)));
            }
        }
    }
    Ok(seen)
}
