//! Shared actor/critic networks with target copies, and their updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::embed::{Candidate, ACTOR_ACTION_DIM, CRITIC_ACTION_DIM, OBS_DIM};
use crate::agents::replay::Experience;
use crate::agents::select::{boltzmann_probs, rank};
use crate::error::{domain, Error, Result};
use crate::neuralnet::{soft_update, Activation, AdamState, Gradients, Mlp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Critic-only; actions ranked by Q.
    #[serde(rename = "Q-IOD")]
    QIod,
    #[serde(rename = "IOD")]
    Iod,
    /// Mean-field critic carrying the mean action.
    #[serde(rename = "COD")]
    Cod,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::QIod => "Q-IOD",
            Variant::Iod => "IOD",
            Variant::Cod => "COD",
        }
    }

    pub fn uses_mean_action(self) -> bool {
        self == Variant::Cod
    }
}

/// Hidden-layer widths of both networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSizes {
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
}

impl NetSizes {
    pub fn desk() -> Self {
        Self { critic_hidden: vec![64, 32], actor_hidden: vec![32, 16] }
    }

    pub fn paper() -> Self {
        Self { critic_hidden: vec![512, 256, 128, 64], actor_hidden: vec![256, 128, 64] }
    }
}

pub fn critic_input_dim(variant: Variant) -> usize {
    OBS_DIM + usize::from(variant.uses_mean_action()) + CRITIC_ACTION_DIM
}

pub fn actor_input_dim() -> usize {
    OBS_DIM + ACTOR_ACTION_DIM
}

/// Parameters shared by every driver.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets<T> {
    pub variant: Variant,
    pub actor: Mlp<T>,
    pub actor_target: Mlp<T>,
    pub critic: Mlp<T>,
    pub critic_target: Mlp<T>,
    pub actor_opt: AdamState<T>,
    pub critic_opt: AdamState<T>,
}

fn widths(input: usize, hidden: &[usize]) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(1)).collect()
}

impl<T: Scalar> AgentNets<T> {
    pub fn new<R: Rng + ?Sized>(variant: Variant, sizes: &NetSizes, rng: &mut R) -> Result<Self> {
        let mut critic: Mlp<T> = Mlp::new(&widths(critic_input_dim(variant), &sizes.critic_hidden), Activation::Relu, rng)?;
        // Start the rectified output unit active for every input: hidden
        // activations are non-negative, so non-negative weights and a
        // positive bias keep its pre-activation above zero.
        let out = critic.layers.last_mut().expect("at least one layer");
        out.weights.iter_mut().for_each(|w| *w = w.abs());
        out.bias.iter_mut().for_each(|b| *b = T::lit(0.1));
        let actor = Mlp::new(&widths(actor_input_dim(), &sizes.actor_hidden), Activation::Sigmoid, rng)?;
        Ok(Self {
            variant,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: AdamState::new(&actor),
            critic_opt: AdamState::new(&critic),
            actor,
            critic,
        })
    }

    /// Whether the networks have the shapes `variant` and `sizes` call for.
    pub fn matches(&self, variant: Variant, sizes: &NetSizes) -> bool {
        self.variant == variant
            && self.critic.widths() == widths(critic_input_dim(variant), &sizes.critic_hidden)
            && self.actor.widths() == widths(actor_input_dim(), &sizes.actor_hidden)
    }

    fn critic_input(&self, obs: &[T], mean_action: T, action: &[T]) -> Vec<T> {
        let mut x = Vec::with_capacity(obs.len() + 1 + action.len());
        x.extend_from_slice(obs);
        if self.variant.uses_mean_action() {
            x.push(mean_action);
        }
        x.extend_from_slice(action);
        x
    }

    pub fn q(&self, obs: &[T], mean_action: T, action: &[T]) -> Result<T> {
        self.critic.forward_scalar(&self.critic_input(obs, mean_action, action))
    }

    pub fn q_target(&self, obs: &[T], mean_action: T, action: &[T]) -> Result<T> {
        self.critic_target.forward_scalar(&self.critic_input(obs, mean_action, action))
    }

    /// Values the selector turns into probabilities: actor rankings, or Q
    /// for the critic-only variant.
    pub fn ranking(&self, obs: &[T], mean_action: T, candidates: &[Candidate<T>]) -> Result<Vec<T>> {
        if candidates.is_empty() {
            return Err(domain("cannot rank an empty candidate set"));
        }
        match self.variant {
            Variant::QIod => candidates.iter().map(|c| self.q(obs, mean_action, &c.critic)).collect(),
            _ => {
                let acts: Vec<Vec<T>> = candidates.iter().map(|c| c.actor.clone()).collect();
                rank(&self.actor, obs, &acts)
            }
        }
    }

    fn target_ranking(&self, obs: &[T], candidates: &[Candidate<T>]) -> Result<Vec<T>> {
        let acts: Vec<Vec<T>> = candidates.iter().map(|c| c.actor.clone()).collect();
        rank(&self.actor_target, obs, &acts)
    }

    /// `r + gamma * Q-(o', a*)` with `a*` the target actor's top-ranked
    /// next candidate (first on ties).
    pub fn critic_target_iod(&self, e: &Experience<T>, gamma: T) -> Result<T> {
        if e.next_candidates.is_empty() || gamma == T::zero() {
            return Ok(e.reward);
        }
        let r = self.target_ranking(&e.next_obs, &e.next_candidates)?;
        let best = (1..r.len()).fold(0, |b, i| if r[i] > r[b] { i } else { b });
        Ok(e.reward + gamma * self.q_target(&e.next_obs, e.next_mean_action, &e.next_candidates[best].critic)?)
    }

    /// Mean-field value of the next observation: target-policy weighted
    /// target Q over the next candidates; 0 for none.
    pub fn mf_value(&self, next_obs: &[T], next_candidates: &[Candidate<T>], next_mean_action: T, beta: T) -> Result<T> {
        if next_candidates.is_empty() {
            return Ok(T::zero());
        }
        let r = self.target_ranking(next_obs, next_candidates)?;
        let p = boltzmann_probs(&r, beta)?;
        let mut v = T::zero();
        for (c, pi) in next_candidates.iter().zip(p) {
            v = v + pi * self.q_target(next_obs, next_mean_action, &c.critic)?;
        }
        Ok(v)
    }

    fn q_max_target(&self, e: &Experience<T>) -> Result<T> {
        let mut best = T::neg_infinity();
        for c in &e.next_candidates {
            best = best.max(self.q_target(&e.next_obs, e.next_mean_action, &c.critic)?);
        }
        Ok(best)
    }

    /// Variant-specific regression target; depends only on target networks.
    pub fn critic_target(&self, e: &Experience<T>, gamma: T, beta: T) -> Result<T> {
        if e.next_candidates.is_empty() {
            return Ok(e.reward);
        }
        match self.variant {
            Variant::Iod => self.critic_target_iod(e, gamma),
            Variant::Cod => Ok(e.reward + gamma * self.mf_value(&e.next_obs, &e.next_candidates, e.next_mean_action, beta)?),
            Variant::QIod => Ok(e.reward + gamma * self.q_max_target(e)?),
        }
    }

    /// One Adam step on the mean squared TD error; returns the pre-step loss.
    pub fn critic_update(&mut self, batch: &[&Experience<T>], gamma: T, beta: T, lr: T) -> Result<T> {
        if batch.is_empty() {
            return Err(domain("critic update on an empty batch"));
        }
        let n = T::lit(batch.len() as f64);
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut loss = T::zero();
        for e in batch {
            let y = self.critic_target(e, gamma, beta)?;
            let x = self.critic_input(&e.obs, e.mean_action, &e.action);
            let q = self.critic.forward_scalar(&x)?;
            let err = q - y;
            loss = loss + err * err / n;
            self.critic.backward_accumulate(&x, &[T::lit(2.0) * err / n], &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("critic loss is {loss}")));
        }
        self.critic_opt.step(&mut self.critic, &grads, lr)?;
        Ok(loss)
    }

    /// Gradient of the batch-mean `sum_a pi(a|o) Q(o,(abar,a))` with respect
    /// to the actor parameters, Q held fixed. Returns it with the objective.
    pub fn actor_gradient(&self, batch: &[&Experience<T>], beta: T) -> Result<(Gradients<T>, T)> {
        let n = T::lit(batch.len() as f64);
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut objective = T::zero();
        let mut input = Vec::new();
        for e in batch {
            if e.candidates.is_empty() {
                continue;
            }
            let acts: Vec<Vec<T>> = e.candidates.iter().map(|c| c.actor.clone()).collect();
            let mu = rank(&self.actor, &e.obs, &acts)?;
            let pi = boltzmann_probs(&mu, beta)?;
            let q: Vec<T> = e
                .candidates
                .iter()
                .map(|c| self.q(&e.obs, e.mean_action, &c.critic))
                .collect::<Result<_>>()?;
            let v: T = pi.iter().zip(&q).map(|(p, q)| *p * *q).sum();
            objective = objective + v / n;
            for (j, a) in acts.iter().enumerate() {
                // dJ/dmu_j = beta * pi_j * (Q_j - V)
                let d = beta * pi[j] * (q[j] - v) / n;
                if d == T::zero() {
                    continue;
                }
                input.clear();
                input.extend_from_slice(&e.obs);
                input.extend_from_slice(a);
                self.actor.backward_accumulate(&input, &[d], &mut grads)?;
            }
        }
        Ok((grads, objective))
    }

    /// One ascent step on the expected critic value under the Boltzmann
    /// policy. The critic-only variant does nothing and returns 0.
    pub fn actor_update(&mut self, batch: &[&Experience<T>], beta: T, lr: T) -> Result<T> {
        if self.variant == Variant::QIod {
            return Ok(T::zero());
        }
        if batch.is_empty() {
            return Err(domain("actor update on an empty batch"));
        }
        let (mut grads, objective) = self.actor_gradient(batch, beta)?;
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite actor gradient".into()));
        }
        grads.scale(-T::one());
        self.actor_opt.step(&mut self.actor, &grads, lr)?;
        Ok(objective)
    }

    pub fn soft_update_targets(&mut self, tau_critic: T, tau_actor: T) -> Result<()> {
        soft_update(&mut self.critic_target, &self.critic, tau_critic)?;
        if self.variant != Variant::QIod {
            soft_update(&mut self.actor_target, &self.actor, tau_actor)?;
        }
        Ok(())
    }
}
