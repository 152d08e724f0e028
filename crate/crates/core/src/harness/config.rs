use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{LearnConfig, NetSizes, TemperatureSchedule, Variant};
use crate::error::{Error, Result};
use crate::hexworld::{Geometry, GridId, HexGrid};
use crate::simcore::{DemandModel, FareModel, ReplayDemand, RewardWeights, SimConfig, SyntheticDemand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DispatcherKind {
    #[serde(rename = "RAN")]
    Ran,
    #[serde(rename = "RES")]
    Res,
    #[serde(rename = "REV")]
    Rev,
    #[serde(rename = "HOD")]
    Hod,
    #[serde(rename = "Q-IOD")]
    QIod,
    #[serde(rename = "IOD")]
    Iod,
    #[serde(rename = "COD")]
    Cod,
}

impl DispatcherKind {
    pub const ALL: [DispatcherKind; 7] = [
        DispatcherKind::Ran,
        DispatcherKind::Res,
        DispatcherKind::Rev,
        DispatcherKind::Hod,
        DispatcherKind::QIod,
        DispatcherKind::Iod,
        DispatcherKind::Cod,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DispatcherKind::Ran => "RAN",
            DispatcherKind::Res => "RES",
            DispatcherKind::Rev => "REV",
            DispatcherKind::Hod => "HOD",
            DispatcherKind::QIod => "Q-IOD",
            DispatcherKind::Iod => "IOD",
            DispatcherKind::Cod => "COD",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            DispatcherKind::QIod => Some(Variant::QIod),
            DispatcherKind::Iod => Some(Variant::Iod),
            DispatcherKind::Cod => Some(Variant::Cod),
            _ => None,
        }
    }

    pub fn is_learning(self) -> bool {
        self.variant().is_some()
    }
}

impl fmt::Display for DispatcherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DispatcherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == up || k.name().replace('-', "") == up)
            .ok_or_else(|| Error::Config(format!("unknown dispatcher '{s}'")))
    }
}

/// Where orders come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandSpec {
    Synthetic(SyntheticDemand),
    /// Order-event file, resolved relative to the working directory.
    Replay { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dispatcher: DispatcherKind,
    pub sim: SimConfig,
    pub demand: DemandSpec,
    pub learning: LearnConfig,
    /// Training episodes (simulated days).
    pub episodes: u32,
    /// Episodes between checkpoints.
    pub checkpoint_every: u32,
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.learning.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint cadence must be positive".into()));
        }
        if let DemandSpec::Replay { path } = &self.demand {
            if !path.exists() {
                return Err(Error::Config(format!("replay file {} not found", path.display())));
            }
        }
        self.demand_model()?.validate(&self.sim.geometry)
    }

    pub fn demand_model(&self) -> Result<DemandModel> {
        Ok(match &self.demand {
            DemandSpec::Synthetic(s) => DemandModel::Synthetic(s.clone()),
            DemandSpec::Replay { path } => {
                DemandModel::Replay(ReplayDemand::from_path(path, &self.sim.geometry, self.sim.mode)?)
            }
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(&serde_json::to_value(self)?)?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn with_dispatcher(&self, kind: DispatcherKind) -> Self {
        Self { dispatcher: kind, ..self.clone() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "two-zone" | "desk" => Ok(two_zone()),
            "coordinate" => Ok(coordinate()),
            "paper" => Ok(paper()),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected two-zone, coordinate or paper)"
            ))),
        }
    }
}

/// Hour-of-day demand multipliers with morning and evening peaks.
fn commuter_profile() -> Vec<f64> {
    vec![
        0.3, 0.2, 0.15, 0.15, 0.2, 0.4, 0.8, 1.3, 1.6, 1.3, 1.0, 1.0, 1.1, 1.0, 1.0, 1.1, 1.3, 1.6, 1.7, 1.4, 1.1, 0.9,
        0.7, 0.5,
    ]
}

/// Cells within `radius` hex steps of the grid's middle cell.
fn center_zone(grid: &HexGrid, radius: usize) -> Vec<bool> {
    let mid = grid.id(grid.rows() / 2, grid.cols() / 2);
    grid.cells()
        .map(|c| grid.hex_steps(mid, c).map(|d| d <= radius).unwrap_or(false))
        .collect()
}

fn two_zone_demand(grid: &HexGrid) -> SyntheticDemand {
    let cbd = center_zone(grid, 1);
    let suburb = center_zone(grid, 3).into_iter().map(|inner| !inner).collect::<Vec<_>>();
    let rate = |i: usize| if cbd[i] { 3.0 } else if suburb[i] { 0.05 } else { 0.25 };
    let dest = |i: usize| if cbd[i] { 4.0 } else if suburb[i] { 0.6 } else { 1.0 };
    SyntheticDemand {
        origin_rates: (0..grid.len()).map(rate).collect(),
        hourly_profile: commuter_profile(),
        destination_weights: (0..grid.len()).map(dest).collect(),
        fare: FareModel::default(),
    }
}

/// Desk-scale learning defaults.
pub fn desk_learning(episodes: u32) -> LearnConfig {
    LearnConfig {
        gamma: 0.95,
        actor_lr: 3e-3,
        critic_lr: 3e-3,
        batch_size: 256,
        update_every: 256,
        updates_per_round: 48,
        tau_critic: 0.05,
        tau_actor: 0.05,
        buffer_capacity: 100_000,
        reward_scale: 0.1,
        temperature: TemperatureSchedule { start: 1.0, end: 0.01, horizon: episodes },
        actor_temperature: 0.03,
        nets: NetSizes::desk(),
    }
}

/// 10x10 grid, 200 drivers, a hot central business district and a cold
/// suburban ring.
fn two_zone() -> ExperimentConfig {
    let grid = HexGrid::new(10, 10, HexGrid::DEFAULT_CELL_KM).expect("valid grid");
    let geometry = Geometry::new(grid.clone(), 12.0);
    let mut sim = SimConfig::grid(geometry, 200);
    // Fast shift turnover with re-entry near the CBD: drivers never reposition
    // themselves, so without it long trips strand them in the suburbs.
    sim.on_rate = 0.3;
    sim.off_rate = 0.3;
    sim.initial_online = 0.8;
    sim.resample_on_reentry = true;
    let (cbd, inner) = (center_zone(&grid, 1), center_zone(&grid, 3));
    sim.placement_weights = (0..grid.len())
        .map(|i| if cbd[i] { 4.0 } else if inner[i] { 1.0 } else { 0.5 })
        .collect();
    sim.reward = RewardWeights { alpha_dp: 1.0, alpha_pickup: 0.0 };
    ExperimentConfig {
        name: "two-zone".into(),
        dispatcher: DispatcherKind::Cod,
        demand: DemandSpec::Synthetic(two_zone_demand(&grid)),
        sim,
        learning: desk_learning(20),
        episodes: 20,
        checkpoint_every: 1,
        seeds: vec![1, 2, 3, 4, 5],
        output_dir: None,
    }
}

/// Coordinate-mode variant of the two-zone city.
fn coordinate() -> ExperimentConfig {
    let mut cfg = two_zone();
    let geometry = cfg.sim.geometry.clone();
    let mut sim = SimConfig::coordinate(geometry, 200);
    sim.on_rate = cfg.sim.on_rate;
    sim.off_rate = cfg.sim.off_rate;
    sim.initial_online = cfg.sim.initial_online;
    sim.resample_on_reentry = true;
    sim.placement_weights = cfg.sim.placement_weights.clone();
    sim.receive_radius = 0.1;
    sim.reward = RewardWeights { alpha_dp: 1.0, alpha_pickup: -0.1 };
    cfg.sim = sim;
    cfg.name = "coordinate".into();
    cfg.learning.batch_size = 200;
    cfg
}

/// Paper-sized networks and update cadence on the two-zone city.
fn paper() -> ExperimentConfig {
    let mut cfg = two_zone();
    cfg.name = "paper".into();
    cfg.sim.reward = RewardWeights::grid();
    cfg.learning = LearnConfig { temperature: TemperatureSchedule { horizon: 20, ..Default::default() }, ..Default::default() };
    cfg
}

/// Cells of the central zone of the two-zone preset.
pub fn hot_cells(grid: &HexGrid) -> Vec<GridId> {
    center_zone(grid, 1).into_iter().enumerate().filter(|(_, b)| *b).map(|(i, _)| GridId(i)).collect()
}
