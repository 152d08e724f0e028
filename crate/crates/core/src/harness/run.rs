//! Training and evaluation loops.

use std::path::PathBuf;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{load_nets, save_nets, AgentNets, LearningDispatcher};
use crate::baselines::{HodDispatcher, Rule, RuleDispatcher};
use crate::dispatch::Dispatcher;
use crate::error::{Error, Result};
use crate::harness::config::{DispatcherKind, ExperimentConfig};
use crate::rngs::{derive_seed, substream};
use crate::simcore::{metrics_report, MetricsSummary, Simulator, StepMetrics};

/// Everything observed during one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub dispatcher: DispatcherKind,
    pub seed: u64,
    pub history: Vec<StepMetrics>,
    /// Per-cell `#DD - #DS` at each dispatch step.
    pub gaps: Vec<Vec<i64>>,
}

impl DayRecord {
    pub fn summary(&self) -> Result<MetricsSummary> {
        metrics_report(&self.history)
    }
}

/// Runs one day from `sim_seed`, recording metrics and gap snapshots.
pub fn simulate_day(
    cfg: &ExperimentConfig,
    dispatcher: &mut dyn Dispatcher,
    sim_seed: u64,
    rng: &mut ChaCha8Rng,
    kind: DispatcherKind,
) -> Result<(Simulator, DayRecord)> {
    let mut sim = Simulator::new(cfg.sim.clone(), cfg.demand_model()?, sim_seed)?;
    let mut gaps = Vec::with_capacity(cfg.sim.steps_per_day as usize);
    while !sim.is_done() {
        sim.begin_step()?;
        gaps.push(sim.gap_snapshot());
        let a = dispatcher.dispatch(&sim, rng)?;
        let out = sim.step(&a)?;
        dispatcher.after_step(&sim, &out, rng)?;
    }
    dispatcher.end_episode(&sim, rng)?;
    let record = DayRecord { dispatcher: kind, seed: sim_seed, history: sim.history().to_vec(), gaps };
    Ok((sim, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u32,
    pub temperature: f64,
    pub summary: MetricsSummary,
    pub updates: u64,
    pub critic_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub dispatcher: DispatcherKind,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub wall_clock_s: f64,
    pub checkpoints: Vec<PathBuf>,
    pub best_episode: Option<u32>,
    pub best_checkpoint: Option<PathBuf>,
    /// Set when training stopped on a numeric failure.
    pub diverged: Option<String>,
}

pub struct TrainOutcome {
    pub record: RunRecord,
    /// Parameters from the episode with the highest training GMV.
    pub best: Option<AgentNets<f64>>,
}

/// Trains a learning dispatcher for `cfg.episodes` days. Checkpoints go
/// under `output_dir/checkpoints` when an output directory is configured.
pub fn run_training(cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    let started = Instant::now();
    let variant = cfg
        .dispatcher
        .variant()
        .ok_or_else(|| Error::Config(format!("{} is not a learning dispatcher", cfg.dispatcher)))?;
    cfg.validate()?;
    let mut init = substream(seed, "init");
    let nets = AgentNets::<f64>::new(variant, &cfg.learning.nets, &mut init)?;
    let mut learner = LearningDispatcher::new(nets, cfg.learning.clone())?;
    let mut rng = substream(seed, "selection");
    let mut record = RunRecord {
        config_hash: cfg.hash()?,
        dispatcher: cfg.dispatcher,
        seed,
        episodes: Vec::new(),
        wall_clock_s: 0.0,
        checkpoints: Vec::new(),
        best_episode: None,
        best_checkpoint: None,
        diverged: None,
    };
    let mut best: Option<(i64, AgentNets<f64>)> = None;
    for ep in 0..cfg.episodes {
        learner.begin_episode(ep);
        let day_seed = derive_seed(seed, "train-day", u64::from(ep));
        let day = match simulate_day(cfg, &mut learner, day_seed, &mut rng, cfg.dispatcher) {
            Ok((_, day)) => day,
            Err(Error::Numeric(msg)) => {
                record.diverged = Some(format!("episode {ep}: {msg}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let summary = day.summary()?;
        let gmv = summary.gmv_cents;
        record.episodes.push(EpisodeRecord {
            episode: ep,
            temperature: cfg.learning.temperature.temperature(ep),
            summary,
            updates: learner.stats.updates,
            critic_loss: learner.stats.last_critic_loss,
        });
        let improved = best.as_ref().is_none_or(|(g, _)| gmv > *g);
        let due = (ep + 1) % cfg.checkpoint_every == 0;
        if let Some(dir) = &cfg.output_dir {
            if due || improved {
                let path = dir.join("checkpoints").join(format!("episode-{ep:03}"));
                save_nets(&learner.nets, &path)?;
                record.checkpoints.push(path.clone());
                if improved {
                    record.best_checkpoint = Some(path);
                }
            }
        }
        if improved {
            record.best_episode = Some(ep);
            best = Some((gmv, learner.nets.clone()));
        }
    }
    record.wall_clock_s = started.elapsed().as_secs_f64();
    Ok(TrainOutcome { record, best: best.map(|(_, n)| n) })
}

/// Builds a dispatcher; learning kinds need parameters, which are frozen.
pub fn make_dispatcher(
    cfg: &ExperimentConfig,
    kind: DispatcherKind,
    nets: Option<&AgentNets<f64>>,
) -> Result<Box<dyn Dispatcher>> {
    Ok(match kind {
        DispatcherKind::Ran => Box::new(RuleDispatcher { rule: Rule::Ran }),
        DispatcherKind::Res => Box::new(RuleDispatcher { rule: Rule::Res }),
        DispatcherKind::Rev => Box::new(RuleDispatcher { rule: Rule::Rev }),
        DispatcherKind::Hod => Box::new(HodDispatcher),
        _ => {
            let variant = kind.variant().expect("learning kind");
            let nets = nets.ok_or_else(|| Error::Config(format!("{kind} needs trained parameters")))?;
            if !nets.matches(variant, &cfg.learning.nets) {
                return Err(Error::Checkpoint(format!("parameters do not fit the {kind} architecture")));
            }
            let mut d = LearningDispatcher::new(nets.clone(), cfg.learning.clone())?;
            d.freeze();
            Box::new(d)
        }
    })
}

/// Loads a checkpoint directory for `cfg.dispatcher`.
pub fn load_checkpoint(cfg: &ExperimentConfig, dir: &std::path::Path) -> Result<AgentNets<f64>> {
    let variant = cfg
        .dispatcher
        .variant()
        .ok_or_else(|| Error::Config(format!("{} has no checkpoint", cfg.dispatcher)))?;
    load_nets(dir, variant, &cfg.learning.nets)
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub seed: u64,
    pub summary: MetricsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub dispatcher: DispatcherKind,
    pub rows: Vec<EvalRow>,
    pub gmv: Stat,
    pub orr: Stat,
    pub adp: Stat,
    pub aat: Stat,
}

impl EvalSummary {
    pub fn from_rows(dispatcher: DispatcherKind, rows: Vec<EvalRow>) -> Self {
        let col = |f: fn(&MetricsSummary) -> f64| Stat::of(&rows.iter().map(|r| f(&r.summary)).collect::<Vec<_>>());
        Self {
            dispatcher,
            gmv: col(|s| s.gmv),
            orr: col(|s| s.orr),
            adp: col(|s| s.adp),
            aat: col(|s| s.aat),
            rows,
        }
    }

    pub fn per_seed(&self, metric: Metric) -> Vec<f64> {
        self.rows.iter().map(|r| metric.of(&r.summary)).collect()
    }
}

/// Frozen evaluation of `cfg.dispatcher` on each seed. Rule-based
/// dispatchers ignore `nets`.
pub fn run_eval(cfg: &ExperimentConfig, nets: Option<&AgentNets<f64>>, seeds: &[u64]) -> Result<EvalSummary> {
    Ok(EvalSummary::from_rows(
        cfg.dispatcher,
        eval_days(cfg, nets, seeds)?
            .into_iter()
            .map(|d| Ok(EvalRow { seed: d.seed, summary: d.summary()? }))
            .collect::<Result<_>>()?,
    ))
}

/// Evaluation days with full records.
pub fn eval_days(cfg: &ExperimentConfig, nets: Option<&AgentNets<f64>>, seeds: &[u64]) -> Result<Vec<DayRecord>> {
    cfg.validate()?;
    let nets = if cfg.dispatcher.is_learning() { nets } else { None };
    seeds
        .iter()
        .map(|&seed| {
            let mut d = make_dispatcher(cfg, cfg.dispatcher, nets)?;
            let mut rng = substream(seed, "selection");
            Ok(simulate_day(cfg, d.as_mut(), seed, &mut rng, cfg.dispatcher)?.1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "GMV")]
    Gmv,
    #[serde(rename = "ORR")]
    Orr,
    #[serde(rename = "ADP")]
    Adp,
    #[serde(rename = "AAT")]
    Aat,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Gmv, Metric::Orr, Metric::Adp, Metric::Aat];

    pub fn of(self, s: &MetricsSummary) -> f64 {
        match self {
            Metric::Gmv => s.gmv,
            Metric::Orr => s.orr,
            Metric::Adp => s.adp,
            Metric::Aat => s.aat,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Gmv => "GMV",
            Metric::Orr => "ORR",
            Metric::Adp => "ADP",
            Metric::Aat => "AAT",
        }
    }
}

/// Percentage difference of one metric against the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub dispatcher: DispatcherKind,
    pub metric: Metric,
    /// Per seed; `None` where the reference value is 0.
    pub per_seed: Vec<Option<f64>>,
    /// Difference of the means.
    pub aggregate: Option<f64>,
}

fn pct(x: f64, reference: f64) -> Option<f64> {
    if reference == 0.0 {
        (x == 0.0).then_some(0.0)
    } else {
        Some(100.0 * (x - reference) / reference.abs())
    }
}

/// Normalizes every evaluation against `reference`, seed by seed.
pub fn compare_summaries(evals: &[EvalSummary], reference: DispatcherKind) -> Result<Vec<CompareRow>> {
    let base = evals
        .iter()
        .find(|e| e.dispatcher == reference)
        .ok_or_else(|| Error::Config(format!("reference dispatcher {reference} missing from comparison")))?;
    let mut rows = Vec::new();
    for e in evals {
        if e.rows.len() != base.rows.len() {
            return Err(Error::Config("evaluations cover different seed lists".into()));
        }
        for m in Metric::ALL {
            let per_seed = e.per_seed(m).iter().zip(base.per_seed(m)).map(|(x, r)| pct(*x, r)).collect();
            let mean = |s: &EvalSummary| Stat::of(&s.per_seed(m)).mean;
            rows.push(CompareRow { dispatcher: e.dispatcher, metric: m, per_seed, aggregate: pct(mean(e), mean(base)) });
        }
    }
    Ok(rows)
}

/// Evaluates each dispatcher (training learning ones first) and compares.
pub fn compare(
    kinds: &[DispatcherKind],
    cfg: &ExperimentConfig,
    seeds: &[u64],
    reference: DispatcherKind,
) -> Result<(Vec<EvalSummary>, Vec<CompareRow>)> {
    if !kinds.contains(&reference) {
        return Err(Error::Config(format!("reference dispatcher {reference} missing from comparison")));
    }
    let mut evals = Vec::new();
    for &k in kinds {
        let c = cfg.with_dispatcher(k);
        let nets = if k.is_learning() { run_training(&c, cfg.seeds[0])?.best } else { None };
        evals.push(run_eval(&c, nets.as_ref(), seeds)?);
    }
    let rows = compare_summaries(&evals, reference)?;
    Ok((evals, rows))
}
