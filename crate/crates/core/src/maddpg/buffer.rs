use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{contract, Error, Result};

/// One stored experience: joint observation, joint action indicators,
/// every agent's reward, next joint observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(contract("replay buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            entries: Vec::new(),
            cursor: 0,
        })
    }

    /// Rebuilds a buffer from its storage slots and write cursor.
    pub fn from_parts(capacity: usize, entries: Vec<Transition>, cursor: usize) -> Result<Self> {
        if capacity == 0 || entries.len() > capacity {
            return Err(contract("replay buffer parts exceed capacity"));
        }
        let expected_cursor_ok = if entries.len() < capacity {
            cursor == entries.len() % capacity
        } else {
            cursor < capacity
        };
        if !expected_cursor_ok {
            return Err(contract("replay buffer cursor inconsistent with its size"));
        }
        Ok(Self {
            capacity,
            entries,
            cursor,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Slot index that the next push writes.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Raw storage slots, not in age order once the ring has wrapped.
    pub fn slots(&self) -> &[Transition] {
        &self.entries
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.entries.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.entries[split..].iter().chain(self.entries[..split].iter())
    }

    pub fn push(&mut self, transition: Transition) {
        if self.entries.len() < self.capacity {
            self.entries.push(transition);
        } else {
            self.entries[self.cursor] = transition;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Draws `size` slot indices uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<usize>> {
        if size == 0 {
            return Err(contract("minibatch size must be positive"));
        }
        if self.entries.len() < size {
            return Err(Error::NotReady {
                have: self.entries.len(),
                need: size,
            });
        }
        let n = self.entries.len();
        Ok((0..size).map(|_| rng.random_range(0..n)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Minibatch> {
        let idx = self.sample_indices(size, rng)?;
        let picked: Vec<&Transition> = idx.iter().map(|&i| &self.entries[i]).collect();
        Minibatch::from_transitions(&picked)
    }
}

/// Row-per-sample matrices gathered from transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub done: Array1<f64>,
}

impl Minibatch {
    pub fn from_transitions(rows: &[&Transition]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| contract("a minibatch needs at least one transition"))?;
        let dims = (
            first.obs.len(),
            first.actions.len(),
            first.rewards.len(),
            first.next_obs.len(),
        );
        if dims.0 != dims.3 {
            return Err(contract("observation and next observation lengths differ"));
        }
        if rows.iter().any(|t| {
            (t.obs.len(), t.actions.len(), t.rewards.len(), t.next_obs.len()) != dims
        }) {
            return Err(contract("transitions in a minibatch have different shapes"));
        }
        let gather = |width: usize, f: &dyn Fn(&Transition) -> &[f64]| {
            Array2::from_shape_fn((rows.len(), width), |(r, c)| f(rows[r])[c])
        };
        Ok(Self {
            obs: gather(dims.0, &|t| &t.obs),
            actions: gather(dims.1, &|t| &t.actions),
            rewards: gather(dims.2, &|t| &t.rewards),
            next_obs: gather(dims.3, &|t| &t.next_obs),
            done: rows.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
