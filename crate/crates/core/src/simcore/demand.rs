//! Order generation: bootstrapped replay of an event file, or a synthetic
//! per-cell Poisson process.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hexworld::{Coord, Geometry, GridId, Location};
use crate::simcore::{to_cents, Mode, Order, OrderId, OrderStatus, STEPS_PER_HOUR};

/// Price and duration as functions of trip length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FareModel {
    pub base: f64,
    pub per_km: f64,
    /// Distance covered per dispatch step while carrying a passenger.
    pub km_per_step: f64,
    /// Trip length assumed for trips that start and end in one cell.
    pub intra_cell_km: f64,
}

impl Default for FareModel {
    fn default() -> Self {
        Self {
            base: 2.0,
            per_km: 1.5,
            km_per_step: 3.0,
            intra_cell_km: 0.8,
        }
    }
}

impl FareModel {
    pub fn price(&self, km: f64) -> f64 {
        self.base + self.per_km * km
    }

    pub fn duration_steps(&self, km: f64) -> u32 {
        ((km / self.km_per_step).ceil() as u32).max(1)
    }
}

/// Per-cell, per-hour Poisson arrivals with an origin-independent
/// destination distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDemand {
    /// Mean orders per step originating in each cell.
    pub origin_rates: Vec<f64>,
    /// 24 multipliers applied to `origin_rates` by hour of day.
    pub hourly_profile: Vec<f64>,
    /// Relative attractiveness of each cell as a destination.
    pub destination_weights: Vec<f64>,
    pub fare: FareModel,
}

impl SyntheticDemand {
    pub fn uniform(cells: usize, rate: f64) -> Self {
        Self {
            origin_rates: vec![rate; cells],
            hourly_profile: vec![1.0; 24],
            destination_weights: vec![1.0; cells],
            fare: FareModel::default(),
        }
    }

    fn validate(&self, cells: usize) -> Result<()> {
        if self.origin_rates.len() != cells || self.destination_weights.len() != cells {
            return Err(Error::Config(format!(
                "synthetic demand describes {} / {} cells, grid has {cells}",
                self.origin_rates.len(),
                self.destination_weights.len()
            )));
        }
        if self.hourly_profile.len() != 24 {
            return Err(Error::Config("hourly profile needs 24 entries".into()));
        }
        let bad = |v: &f64| !(v.is_finite() && *v >= 0.0);
        if self.origin_rates.iter().any(bad) || self.hourly_profile.iter().any(bad) || self.destination_weights.iter().any(bad) {
            return Err(Error::Config("demand rates and weights must be finite and non-negative".into()));
        }
        if self.destination_weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("destination weights sum to zero".into()));
        }
        Ok(())
    }
}

/// One historical order event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTemplate {
    pub created_step: u32,
    pub origin: Location,
    pub destination: Location,
    pub price: f64,
    pub duration_steps: u32,
}

/// Historical events indexed by the dispatch window they fall into.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayDemand {
    pub windows: BTreeMap<u32, Vec<OrderTemplate>>,
}

fn parse_location(field: &str, geometry: &Geometry) -> Result<Location> {
    let field = field.trim();
    if let Some((x, y)) = field.split_once(';') {
        let x: f64 = x.trim().parse().map_err(|_| domain(format!("bad x coordinate '{x}'")))?;
        let y: f64 = y.trim().parse().map_err(|_| domain(format!("bad y coordinate '{y}'")))?;
        Ok(Location::Point(Coord::new(x, y)?))
    } else {
        let id: usize = field.parse().map_err(|_| domain(format!("bad cell id '{field}'")))?;
        geometry.grid.check(GridId(id))?;
        Ok(Location::Cell(GridId(id)))
    }
}

impl ReplayDemand {
    /// Parses comma-separated records
    /// `created_step,origin,destination,price,duration_steps`.
    /// Locations are a cell id (`17`) or a normalized point (`0.25;0.75`).
    /// Lines starting with `#` are comments.
    pub fn from_reader<R: std::io::Read>(reader: R, geometry: &Geometry, mode: Mode) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut windows: BTreeMap<u32, Vec<OrderTemplate>> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Config(format!("replay record {} has {} fields, expected 5", line + 1, rec.len())));
            }
            let created_step: u32 = rec[0].parse().map_err(|_| domain(format!("bad step '{}'", &rec[0])))?;
            let origin = parse_location(&rec[1], geometry)?;
            let destination = parse_location(&rec[2], geometry)?;
            let price: f64 = rec[3].parse().map_err(|_| domain(format!("bad price '{}'", &rec[3])))?;
            let duration_steps: u32 = rec[4].parse().map_err(|_| domain(format!("bad duration '{}'", &rec[4])))?;
            if !(price.is_finite() && price > 0.0) {
                return Err(Error::Config(format!("replay record {} has non-positive price", line + 1)));
            }
            if duration_steps == 0 {
                return Err(Error::Config(format!("replay record {} has zero duration", line + 1)));
            }
            if origin.is_cell() != (mode == Mode::Grid) || destination.is_cell() != (mode == Mode::Grid) {
                return Err(Error::Config(format!("replay record {} does not match the simulator mode", line + 1)));
            }
            windows.entry(created_step).or_default().push(OrderTemplate {
                created_step,
                origin,
                destination,
                price,
                duration_steps,
            });
        }
        if windows.is_empty() {
            return Err(Error::Config("replay event file holds no orders".into()));
        }
        Ok(Self { windows })
    }

    pub fn from_path(path: &Path, geometry: &Geometry, mode: Mode) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open replay file {}: {e}", path.display())))?;
        Self::from_reader(file, geometry, mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DemandModel {
    Synthetic(SyntheticDemand),
    Replay(ReplayDemand),
}

impl DemandModel {
    pub fn validate(&self, geometry: &Geometry) -> Result<()> {
        match self {
            DemandModel::Synthetic(s) => s.validate(geometry.grid.len()),
            DemandModel::Replay(r) if r.windows.is_empty() => Err(Error::Config("replay event file holds no orders".into())),
            DemandModel::Replay(_) => Ok(()),
        }
    }
}

/// Uniform point inside the hexagon-ish box around a cell center.
pub(crate) fn jitter_in_cell<R: Rng + ?Sized>(geometry: &Geometry, cell: GridId, rng: &mut R) -> Coord {
    let g = &geometry.grid;
    let c = g.center(cell);
    let hx = 0.5 / (g.cols() as f64 + 0.5);
    let hy = 0.5 / g.rows() as f64;
    let p = Coord::clamped(c.x + rng.random_range(-hx..hx), c.y + rng.random_range(-hy..hy));
    if g.cell_of(p) == cell {
        p
    } else {
        c
    }
}

/// Draws the orders created in dispatch window `step`. New orders are open
/// and carry ids starting at `next_id`.
///
/// Replay mode draws `floor(p_sample * k)` events with replacement from the
/// `k` events of the window; synthetic mode scales every Poisson rate by
/// `p_sample`.
#[allow(clippy::too_many_arguments)]
pub fn generate_orders<R: Rng + ?Sized>(
    model: &DemandModel,
    geometry: &Geometry,
    mode: Mode,
    step: u32,
    p_sample: f64,
    next_id: u64,
    rng: &mut R,
) -> Result<Vec<Order>> {
    if !(0.0..=1.0).contains(&p_sample) {
        return Err(domain(format!("p_sample {p_sample} outside [0, 1]")));
    }
    let mut out = Vec::new();
    if p_sample == 0.0 {
        return Ok(out);
    }
    let mut id = next_id;
    let mut push = |origin, destination, price: f64, duration_steps| {
        out.push(Order {
            id: OrderId(id),
            origin,
            destination,
            price_cents: to_cents(price).max(1),
            duration_steps,
            created_step: step,
            status: OrderStatus::Open,
        });
        id += 1;
    };
    match model {
        DemandModel::Replay(replay) => {
            if replay.windows.is_empty() {
                return Err(Error::Config("replay event file holds no orders".into()));
            }
            if let Some(events) = replay.windows.get(&step) {
                let draws = (p_sample * events.len() as f64).floor() as usize;
                for _ in 0..draws {
                    let e = &events[rng.random_range(0..events.len())];
                    push(e.origin, e.destination, e.price, e.duration_steps);
                }
            }
        }
        DemandModel::Synthetic(syn) => {
            syn.validate(geometry.grid.len())?;
            let hour = ((step / STEPS_PER_HOUR) % 24) as usize;
            let dest = WeightedIndex::new(&syn.destination_weights)
                .map_err(|e| Error::Config(format!("destination weights: {e}")))?;
            for cell in geometry.grid.cells() {
                let mean = syn.origin_rates[cell.0] * syn.hourly_profile[hour] * p_sample;
                if mean <= 0.0 {
                    continue;
                }
                let count = Poisson::new(mean)
                    .map_err(|e| Error::Config(format!("poisson rate {mean}: {e}")))?
                    .sample(rng) as u64;
                for _ in 0..count {
                    let to = GridId(dest.sample(rng));
                    let (origin, destination) = match mode {
                        Mode::Grid => (Location::Cell(cell), Location::Cell(to)),
                        Mode::Coordinate => (
                            Location::Point(jitter_in_cell(geometry, cell, rng)),
                            Location::Point(jitter_in_cell(geometry, to, rng)),
                        ),
                    };
                    let km = geometry.distance(&origin, &destination)?.max(if cell == to {
                        syn.fare.intra_cell_km
                    } else {
                        0.0
                    });
                    push(origin, destination, syn.fare.price(km), syn.fare.duration_steps(km));
                }
            }
        }
    }
    Ok(out)
}
