//! Fixed-capacity experience store with uniform sampling. Transitions are
//! tagged with their episode and in-episode step so that multi-step
//! returns can be reassembled later by walking stored neighbours, even
//! after the ring has wrapped.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};

/// One stored interaction. Feature vectors are shared (`Arc`) because the
/// same vector appears as `next_features` of one transition and `features`
/// of the next.
#[derive(Clone, Debug)]
pub struct Transition {
    pub features: Arc<[f64]>,
    pub action: usize,
    /// Extrinsic reward only; any exploration bonus is added at training
    /// time from the current novelty model.
    pub reward: f64,
    pub next_features: Arc<[f64]>,
    pub done: bool,
    pub episode: u64,
    /// Step index within the episode, starting at 0.
    pub step: usize,
}

/// Ring buffer over [`Transition`]s.
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    /// Next slot to write.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<ReplayBuffer> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 20)),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Append, evicting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    /// Uniform sample of slot indices, with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        if self.data.is_empty() {
            return Err(Error::Contract("cannot sample from an empty buffer".into()));
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.data.len())).collect())
    }

    /// Slot holding the transition that followed `idx` in its episode, if
    /// it is still resident. Writes are sequential, so the only candidate
    /// is the next slot; the episode/step tags reject it when it has been
    /// overwritten, belongs to another episode, or has not been pushed yet.
    pub fn successor(&self, idx: usize) -> Option<usize> {
        let cur = &self.data[idx];
        if cur.done {
            return None;
        }
        let next_idx = (idx + 1) % self.capacity;
        let next = self.data.get(next_idx)?;
        (next.episode == cur.episode && next.step == cur.step + 1).then_some(next_idx)
    }
}
