//! Transitions and the replay buffer.

use std::sync::{Arc, Mutex};

use bplan_core::Observation;
use rand::seq::index;
use rand::Rng;

/// One decision step. Actions are positions in `obs.beacons` and `obs.neighbors`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Arc<Observation>,
    pub beacon: usize,
    pub waypoint: usize,
    pub reward: f64,
    pub next: Arc<Observation>,
    /// Terminal: the target is `reward` alone.
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), head: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest transition once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `n` distinct transitions drawn uniformly; `None` when fewer are stored.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if n > self.items.len() {
            return None;
        }
        Some(index::sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect())
    }
}

/// Buffer shared between rollout workers and the trainer.
#[derive(Debug, Clone)]
pub struct SharedReplay(Arc<Mutex<ReplayBuffer>>);

impl SharedReplay {
    pub fn new(capacity: usize) -> Self {
        Self(Arc::new(Mutex::new(ReplayBuffer::new(capacity))))
    }

    pub fn push(&self, t: Transition) {
        self.0.lock().expect("replay lock").push(t);
    }

    pub fn len(&self) -> usize {
        self.0.lock().expect("replay lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Consistent copy of the current contents.
    pub fn snapshot(&self) -> ReplayBuffer {
        self.0.lock().expect("replay lock").clone()
    }

    /// Samples under the lock; cloned transitions share observations by `Arc`.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Vec<Transition>> {
        let guard = self.0.lock().expect("replay lock");
        guard.sample(n, rng).map(|v| v.into_iter().cloned().collect())
    }
}
