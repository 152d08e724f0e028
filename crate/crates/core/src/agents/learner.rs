//! The learning dispatcher: shared-parameter Boltzmann selection, replay
//! storage and the training schedule around it.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::embed::{
    actor_action_embedding, critic_action_embedding, mean_action_feature, observation_embedding, Candidate,
};
use crate::agents::mean_action::mean_action;
use crate::agents::nets::{AgentNets, NetSizes, Variant};
use crate::agents::replay::{Experience, ReplayBuffer, DEFAULT_CAPACITY};
use crate::agents::select::{boltzmann_select, TemperatureSchedule};
use crate::dispatch::Dispatcher;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simcore::{resolve_conflicts, Assignment, DriverId, DriverStatus, OrderId, Simulator, StepOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    /// New experiences between training rounds.
    pub update_every: usize,
    /// Gradient steps per training round.
    pub updates_per_round: usize,
    pub tau_critic: f64,
    pub tau_actor: f64,
    pub buffer_capacity: usize,
    /// Rewards are multiplied by this before storage.
    pub reward_scale: f64,
    pub temperature: TemperatureSchedule,
    /// Fixed temperature of the policy the actor is trained against. The
    /// exploration temperature anneals towards greedy, which would starve the
    /// score-function gradient.
    pub actor_temperature: f64,
    pub nets: NetSizes,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 2048,
            update_every: 3000,
            updates_per_round: 1,
            tau_critic: 0.01,
            tau_actor: 0.01,
            buffer_capacity: DEFAULT_CAPACITY,
            reward_scale: 1.0,
            temperature: TemperatureSchedule::default(),
            actor_temperature: 0.1,
            nets: NetSizes::paper(),
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::Config(what.into())) };
        bad((0.0..=1.0).contains(&self.gamma), "gamma must lie in [0, 1]")?;
        bad(self.actor_lr > 0.0 && self.critic_lr > 0.0, "learning rates must be positive")?;
        bad(self.batch_size > 0 && self.update_every > 0, "batch size and update cadence must be positive")?;
        bad(
            (0.0..=1.0).contains(&self.tau_critic) && (0.0..=1.0).contains(&self.tau_actor),
            "soft-update rates must lie in [0, 1]",
        )?;
        bad(self.buffer_capacity >= self.batch_size, "replay capacity below batch size")?;
        bad(self.reward_scale.is_finite() && self.reward_scale > 0.0, "reward scale must be positive")?;
        bad(self.actor_temperature.is_finite() && self.actor_temperature > 0.0, "actor temperature must be positive")?;
        self.temperature.validate()
    }
}

/// What an idle driver with candidates sees at a dispatch step.
struct View<T> {
    obs: Vec<T>,
    mean_action: T,
    orders: Vec<OrderId>,
    candidates: Vec<Candidate<T>>,
    ranking: Vec<T>,
}

/// A dispatched driver's transition waiting for its reward or next view.
struct Pending<T> {
    obs: Vec<T>,
    mean_action: T,
    action: Vec<T>,
    candidates: Vec<Candidate<T>>,
    reward: Option<T>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub updates: u64,
    pub last_critic_loss: f64,
    pub last_actor_objective: f64,
    pub stored: u64,
}

/// IOD, COD or Q-IOD acting for every driver with one parameter set.
pub struct LearningDispatcher<T: Scalar> {
    pub nets: AgentNets<T>,
    pub config: LearnConfig,
    pub buffer: ReplayBuffer<T>,
    pub stats: TrainStats,
    beta: f64,
    learning: bool,
    pending: BTreeMap<DriverId, Pending<T>>,
    since_update: usize,
}

impl<T: Scalar> LearningDispatcher<T> {
    pub fn new(nets: AgentNets<T>, config: LearnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            beta: config.temperature.beta(0),
            nets,
            config,
            stats: TrainStats::default(),
            learning: true,
            pending: BTreeMap::new(),
            since_update: 0,
        })
    }

    pub fn variant(&self) -> Variant {
        self.nets.variant
    }

    /// Sets the exploration temperature for a training episode.
    pub fn begin_episode(&mut self, episode: u32) {
        self.beta = self.config.temperature.beta(episode);
        self.pending.clear();
    }

    /// Frozen parameters, exploitation temperature.
    pub fn freeze(&mut self) {
        self.learning = false;
        self.beta = 1.0 / self.config.temperature.end;
        self.pending.clear();
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_learning(&self) -> bool {
        self.learning
    }

    fn view(&self, sim: &Simulator, driver: DriverId) -> Result<Option<View<T>>> {
        let orders = sim.candidate_orders(driver)?;
        let geo = sim.geometry();
        let d = sim.state().driver(driver)?;
        let obs = observation_embedding(&d.observation(sim.state().step), geo);
        let mean_action = mean_action_feature(mean_action(sim, driver)?.value());
        if orders.is_empty() {
            return Ok(Some(View { obs, mean_action, orders, candidates: Vec::new(), ranking: Vec::new() }));
        }
        let mut candidates = Vec::with_capacity(orders.len());
        for id in &orders {
            let o = sim.state().order(*id)?;
            let (km, _) = sim.pickup(driver, *id)?;
            candidates.push(Candidate {
                actor: actor_action_embedding(o, geo),
                critic: critic_action_embedding(o, km, geo),
            });
        }
        let ranking = self.nets.ranking(&obs, mean_action, &candidates)?;
        Ok(Some(View { obs, mean_action, orders, candidates, ranking }))
    }

    fn store(&mut self, p: Pending<T>, next_obs: Vec<T>, next_mean_action: T, next_candidates: Vec<Candidate<T>>) {
        let Some(reward) = p.reward else { return };
        self.buffer.push(Experience {
            obs: p.obs,
            mean_action: p.mean_action,
            action: p.action,
            reward,
            candidates: p.candidates,
            next_obs,
            next_mean_action,
            next_candidates,
        });
        self.since_update += 1;
        self.stats.stored += 1;
    }

    fn finish_terminal(&mut self, driver: DriverId) {
        if let Some(p) = self.pending.remove(&driver) {
            let obs = p.obs.clone();
            let ma = p.mean_action;
            self.store(p, obs, ma, Vec::new());
        }
    }

    /// Runs training rounds while enough new experience has accumulated.
    pub fn train<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        while self.learning && self.since_update >= self.config.update_every {
            self.since_update -= self.config.update_every;
            if self.buffer.len() < self.config.batch_size {
                continue;
            }
            for _ in 0..self.config.updates_per_round {
                self.train_once(rng)?;
            }
        }
        Ok(())
    }

    /// sample -> critic update -> actor update -> soft target updates.
    pub fn train_once<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let c = &self.config;
        let (gamma, beta) = (T::lit(c.gamma), T::lit(self.beta));
        let (clr, alr) = (T::lit(c.critic_lr), T::lit(c.actor_lr));
        let (tc, ta) = (T::lit(c.tau_critic), T::lit(c.tau_actor));
        let batch = self.buffer.sample(c.batch_size, rng)?;
        let loss = self.nets.critic_update(&batch, gamma, beta, clr)?;
        let obj = self.nets.actor_update(&batch, T::lit(1.0 / c.actor_temperature), alr)?;
        self.nets.soft_update_targets(tc, ta)?;
        self.stats.updates += 1;
        self.stats.last_critic_loss = loss.to_f64_lossy();
        self.stats.last_actor_objective = obj.to_f64_lossy();
        Ok(())
    }
}

impl<T: Scalar> Dispatcher for LearningDispatcher<T> {
    fn name(&self) -> &str {
        self.nets.variant.name()
    }

    fn dispatch(&mut self, sim: &Simulator, rng: &mut ChaCha8Rng) -> Result<Assignment> {
        let mut views = BTreeMap::new();
        for d in sim.state().idle_drivers() {
            if let Some(v) = self.view(sim, d.id)? {
                views.insert(d.id, v);
            }
        }

        // Close transitions whose driver has reached its next decision point.
        let waiting: Vec<DriverId> = self.pending.keys().copied().collect();
        for id in waiting {
            match sim.state().driver(id)?.status {
                DriverStatus::OnTrip => {}
                DriverStatus::Offline => self.finish_terminal(id),
                DriverStatus::Idle => {
                    let p = self.pending.remove(&id).expect("listed above");
                    let v = &views[&id];
                    self.store(p, v.obs.clone(), v.mean_action, v.candidates.clone());
                }
            }
        }
        self.train(rng)?;

        let beta = T::lit(self.beta);
        let mut proposals = BTreeMap::new();
        let mut candidate_ids = BTreeMap::new();
        for (id, v) in &views {
            if v.orders.is_empty() {
                continue;
            }
            let (k, _) = boltzmann_select(&v.ranking, beta, rng)?;
            proposals.insert(*id, v.orders[k]);
            candidate_ids.insert(*id, v.orders.clone());
        }
        let assignment = resolve_conflicts(&proposals, &candidate_ids, rng, |d, pool, rng| {
            let v = &views[&d];
            let idx: Vec<usize> = pool
                .iter()
                .map(|o| v.orders.iter().position(|x| x == o).expect("pool is a subset"))
                .collect();
            let values: Vec<T> = idx.iter().map(|&i| v.ranking[i]).collect();
            let (k, _) = boltzmann_select(&values, beta, rng)?;
            Ok(Some(pool[k]))
        })?;

        if self.learning {
            for (d, o) in assignment.iter() {
                let v = views.remove(&d).expect("assigned drivers have views");
                let k = v.orders.iter().position(|x| *x == o).expect("assigned order is a candidate");
                self.pending.insert(
                    d,
                    Pending {
                        action: v.candidates[k].critic.clone(),
                        obs: v.obs,
                        mean_action: v.mean_action,
                        candidates: v.candidates,
                        reward: None,
                    },
                );
            }
        }
        Ok(assignment)
    }

    fn after_step(&mut self, _sim: &Simulator, outcome: &StepOutcome, _rng: &mut ChaCha8Rng) -> Result<()> {
        if !self.learning {
            return Ok(());
        }
        let scale = self.config.reward_scale;
        for r in &outcome.records {
            if let Some(p) = self.pending.get_mut(&r.driver) {
                p.reward = Some(T::lit(r.reward * scale));
            }
        }
        Ok(())
    }

    fn end_episode(&mut self, _sim: &Simulator, rng: &mut ChaCha8Rng) -> Result<()> {
        let ids: Vec<DriverId> = self.pending.keys().copied().collect();
        for id in ids {
            self.finish_terminal(id);
        }
        self.train(rng)
    }
}
