//! Deterministic chain MDP: states s1..sN in a line, two actions, a small
//! distractor reward at the left end and the real reward at the right end.
//!
//! The agent starts every episode in s2 and takes exactly N+9 actions.
//! Moving off either end leaves the state unchanged. After each transition
//! the agent earns 1/1000 if it now sits in s1 and 1 if it now sits in sN,
//! so greedy short-horizon behaviour walks left while the optimal policy
//! runs the full length of the chain.

use crate::error::{Error, Result};

pub const ACTION_LEFT: usize = 0;
pub const ACTION_RIGHT: usize = 1;

/// Reward for occupying s1 after a transition.
pub const LEFT_REWARD: f64 = 0.001;
/// Reward for occupying sN after a transition.
pub const RIGHT_REWARD: f64 = 1.0;

/// Position plus elapsed actions inside the current episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainState {
    /// 1-based chain index in `1..=n`.
    pub index: usize,
    /// Actions taken this episode, in `0..=n+9`.
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Clone)]
pub struct ChainEnv {
    n: usize,
    state: ChainState,
    done: bool,
}

impl ChainEnv {
    pub fn new(n: usize) -> Result<ChainEnv> {
        if n < 3 {
            return Err(Error::Config(format!(
                "a chain needs at least 3 states, got {n}"
            )));
        }
        Ok(ChainEnv {
            n,
            state: ChainState { index: 2, step: 0 },
            done: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Actions per episode.
    pub fn horizon(&self) -> usize {
        self.n + 9
    }

    pub fn state(&self) -> ChainState {
        self.state
    }

    pub fn num_actions(&self) -> usize {
        2
    }

    pub fn obs_dim(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.state = ChainState { index: 2, step: 0 };
        self.done = false;
        chain_encode(self.state.index, self.n).expect("start state is valid")
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract(
                "step on a finished chain episode; call reset first".into(),
            ));
        }
        let index = chain_transition(self.state.index, action, self.n)?;
        self.state = ChainState {
            index,
            step: self.state.step + 1,
        };
        self.done = self.state.step >= self.horizon();
        Ok(StepOutcome {
            obs: chain_encode(index, self.n)?,
            reward: chain_reward(index, self.n),
            done: self.done,
        })
    }
}

/// Pure transition function: left/right with both ends clamped.
pub fn chain_transition(index: usize, action: usize, n: usize) -> Result<usize> {
    if index < 1 || index > n {
        return Err(Error::Contract(format!(
            "chain index {index} outside 1..={n}"
        )));
    }
    match action {
        ACTION_LEFT => Ok(if index == 1 { 1 } else { index - 1 }),
        ACTION_RIGHT => Ok(if index == n { n } else { index + 1 }),
        other => Err(Error::Contract(format!(
            "chain actions are 0 (left) and 1 (right), got {other}"
        ))),
    }
}

/// Reward earned by arriving in (or staying at) `index`.
pub fn chain_reward(index: usize, n: usize) -> f64 {
    if index == 1 {
        LEFT_REWARD
    } else if index == n {
        RIGHT_REWARD
    } else {
        0.0
    }
}

/// One-hot encoding of a chain index over `n` states.
pub fn chain_encode(index: usize, n: usize) -> Result<Vec<f64>> {
    if index < 1 || index > n {
        return Err(Error::Contract(format!(
            "chain index {index} outside 1..={n}"
        )));
    }
    let mut v = vec![0.0; n];
    v[index - 1] = 1.0;
    Ok(v)
}

/// Inverse of [`chain_encode`] for tests and metrics.
pub fn chain_decode(obs: &[f64]) -> Option<usize> {
    let mut found = None;
    for (i, &v) in obs.iter().enumerate() {
        if v == 1.0 {
            if found.is_some() {
                return None;
            }
            found = Some(i + 1);
        } else if v != 0.0 {
            return None;
        }
    }
    found
}
