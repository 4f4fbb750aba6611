use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::JointState;

/// One environment step. Terminal transitions (collision or arrival) are not
/// bootstrapped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: JointState,
    pub reward: f64,
    pub next: JointState,
    pub terminal: bool,
}

/// Bounded FIFO: pushing into a full memory evicts the oldest entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayMemory<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayMemory {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
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

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Uniform sample of `min(n, len)` distinct entries.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}
