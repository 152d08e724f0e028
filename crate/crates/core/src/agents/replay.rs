use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::agents::embed::Candidate;
use crate::error::{domain, Error, Result};

pub const DEFAULT_CAPACITY: usize = 500_000;

/// One stored transition. `next_candidates` is empty for terminal-like
/// transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience<T> {
    pub obs: Vec<T>,
    /// Mean-action feature at `obs`.
    pub mean_action: T,
    /// Critic embedding of the taken action.
    pub action: Vec<T>,
    pub reward: T,
    /// Candidate set at `obs`, kept for the policy update.
    pub candidates: Vec<Candidate<T>>,
    pub next_obs: Vec<T>,
    pub next_mean_action: T,
    pub next_candidates: Vec<Candidate<T>>,
}

/// FIFO ring of experiences.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    items: VecDeque<Experience<T>>,
    capacity: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(domain("replay capacity must be positive"));
        }
        Ok(Self { items: VecDeque::with_capacity(capacity.min(65_536)), capacity })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, e: Experience<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience<T>> {
        self.items.iter()
    }

    /// `k` distinct experiences drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Experience<T>>> {
        if k > self.items.len() {
            return Err(Error::UnderFilled { size: self.items.len(), requested: k });
        }
        Ok(index::sample(rng, self.items.len(), k).into_iter().map(|i| &self.items[i]).collect())
    }
}
