//! Small fully observable Markov games with enumerable states and actions.

use crate::error::{domain, Result};

/// The enumerable (state, mean-action level, action) domain seen by one agent.
///
/// The mean action of agent `i` is the average of the other agents' previous
/// actions scaled into `[0, 1]`, stored as an integer level `k` meaning
/// `k / (levels - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Domain {
    pub states: usize,
    pub levels: usize,
    pub actions: usize,
}

impl Domain {
    pub fn len(&self) -> usize {
        self.states * self.levels * self.actions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, state: usize, level: usize, action: usize) -> usize {
        (state * self.levels + level) * self.actions + action
    }

    pub fn contains(&self, state: usize, level: usize, action: usize) -> bool {
        state < self.states && level < self.levels && action < self.actions
    }

    pub fn mean_action(&self, level: usize) -> f64 {
        if self.levels <= 1 {
            0.0
        } else {
            level as f64 / (self.levels - 1) as f64
        }
    }

    /// All points in index order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.states)
            .flat_map(move |s| (0..self.levels).flat_map(move |l| (0..self.actions).map(move |a| (s, l, a))))
    }
}

/// Tabular Markov game. Joint actions are indexed as `sum a_i * actions^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallGame {
    pub states: usize,
    pub agents: usize,
    pub actions: usize,
    /// `transitions[s][joint][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][joint][agent]`
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// Bound on absolute rewards.
    pub reward_bound: f64,
    pub gamma: f64,
}

impl SmallGame {
    pub fn new(
        states: usize,
        agents: usize,
        actions: usize,
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        reward_bound: f64,
        gamma: f64,
    ) -> Result<Self> {
        let game = Self {
            states,
            agents,
            actions,
            transitions,
            rewards,
            reward_bound,
            gamma,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 || self.agents == 0 || self.actions == 0 {
            return Err(domain("game needs at least one state, agent and action"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(domain("discount must lie in [0, 1)"));
        }
        let joint = self.joint_actions();
        if self.transitions.len() != self.states || self.rewards.len() != self.states {
            return Err(domain("transition or reward table has the wrong number of states"));
        }
        for s in 0..self.states {
            if self.transitions[s].len() != joint || self.rewards[s].len() != joint {
                return Err(domain(format!("state {s}: tables must list {joint} joint actions")));
            }
            for j in 0..joint {
                let row = &self.transitions[s][j];
                if row.len() != self.states || row.iter().any(|p| !(*p >= 0.0)) {
                    return Err(domain(format!("state {s}, joint {j}: invalid transition row")));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(domain(format!("state {s}, joint {j}: transition row does not sum to 1")));
                }
                let r = &self.rewards[s][j];
                if r.len() != self.agents || r.iter().any(|x| !(x.abs() <= self.reward_bound)) {
                    return Err(domain(format!("state {s}, joint {j}: reward missing or above the bound")));
                }
            }
        }
        Ok(())
    }

    pub fn joint_actions(&self) -> usize {
        self.actions.pow(self.agents as u32)
    }

    pub fn decode(&self, joint: usize) -> Vec<usize> {
        let mut rest = joint;
        (0..self.agents)
            .map(|_| {
                let a = rest % self.actions;
                rest /= self.actions;
                a
            })
            .collect()
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        actions.iter().rev().fold(0, |acc, a| acc * self.actions + a)
    }

    pub fn action_of(&self, joint: usize, agent: usize) -> usize {
        joint / self.actions.pow(agent as u32) % self.actions
    }

    /// Mean-action level of `agent` when the others last played `joint`.
    pub fn mean_level(&self, joint: usize, agent: usize) -> usize {
        (0..self.agents).filter(|&j| j != agent).map(|j| self.action_of(joint, j)).sum()
    }

    pub fn domain(&self) -> Domain {
        Domain {
            states: self.states,
            levels: (self.agents - 1) * (self.actions - 1) + 1,
            actions: self.actions,
        }
    }

    pub fn reward(&self, state: usize, joint: usize, agent: usize) -> f64 {
        self.rewards[state][joint][agent]
    }

    /// Pure Nash equilibria of the stage game at `state`.
    pub fn pure_nash(&self, state: usize) -> Vec<usize> {
        (0..self.joint_actions())
            .filter(|&joint| {
                (0..self.agents).all(|i| {
                    let mine = self.reward(state, joint, i);
                    let mut actions = self.decode(joint);
                    (0..self.actions).all(|b| {
                        actions[i] = b;
                        self.reward(state, self.encode(&actions), i) <= mine
                    })
                })
            })
            .collect()
    }

    /// A joint action at which every agent attains its maximal stage reward.
    pub fn global_optimum(&self, state: usize) -> Option<usize> {
        let best: Vec<f64> = (0..self.agents)
            .map(|i| (0..self.joint_actions()).map(|j| self.reward(state, j, i)).fold(f64::MIN, f64::max))
            .collect();
        (0..self.joint_actions()).find(|&j| (0..self.agents).all(|i| self.reward(state, j, i) == best[i]))
    }
}

/// Two agents, two actions, one state, identical payoffs: 10 for both
/// playing 0, 5 for both playing 1, nothing on miscoordination.
pub fn coordination_game() -> SmallGame {
    let payoff = [10.0, 0.0, 0.0, 5.0];
    SmallGame::new(
        1,
        2,
        2,
        vec![vec![vec![1.0]; 4]],
        vec![payoff.iter().map(|&p| vec![p, p]).collect()],
        10.0,
        0.5,
    )
    .expect("valid game")
}

/// Single agent, two states, actions stay (0) and move (1), both
/// deterministic. Moving pays 1 from state 0 and 2 from state 1, staying pays
/// nothing, so the optimal policy cycles through both states.
pub fn chain_mdp() -> SmallGame {
    SmallGame::new(
        2,
        1,
        2,
        vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
        vec![vec![vec![0.0], vec![1.0]], vec![vec![0.0], vec![2.0]]],
        2.0,
        0.5,
    )
    .expect("valid game")
}

/// One state, one action, constant reward.
pub fn single_state_game(reward: f64, gamma: f64) -> Result<SmallGame> {
    SmallGame::new(1, 1, 1, vec![vec![vec![1.0]]], vec![vec![vec![reward]]], reward.abs(), gamma)
}
