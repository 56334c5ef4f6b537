//! Value-based learner and its supporting pieces: a ring-buffer replay
//! store, a piecewise-linear epsilon schedule, a tabular visit counter for
//! the count-bonus baseline, and [`QLearner`] itself — an n-step deep
//! Q-learner with optional double-Q bootstrapping and a dueling head. The
//! learner is reward-agnostic: updates take a closure that maps stored
//! transitions to the reward actually trained on, which is where intrinsic
//! bonuses get mixed in.

pub mod counter;
pub mod replay;
pub mod schedule;

pub use counter::VisitCounter;
pub use replay::{ReplayBuffer, Transition};
pub use schedule::EpsilonSchedule;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, NetworkParams, Output};
use crate::optim::{clip_gradients, OptimizerState};
use crate::tensor::Tensor;

/// Index of the largest value, first occurrence winning ties. Greedy
/// action selection uses this, so ties resolve deterministically.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// How many reward terms a single update target accumulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NStep {
    Fixed(usize),
    /// Drawn uniformly from `lo..=hi` once per update.
    Uniform { lo: usize, hi: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimChoice {
    Adam,
    RmsProp,
}

#[derive(Clone, Debug)]
pub struct QLearnerSettings {
    pub input_dim: usize,
    pub n_actions: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Decompose Q into state value plus mean-centred advantages.
    pub dueling: bool,
    /// Select the bootstrap action with the online net, evaluate it with
    /// the target net.
    pub double: bool,
    pub optimizer: OptimChoice,
    pub lr: f64,
    pub gamma: f64,
    pub n_step: NStep,
    pub batch_size: usize,
    /// Clamp every gradient component into this range before stepping.
    pub grad_clip: Option<(f64, f64)>,
    /// Copy online parameters into the target net every this-many updates.
    pub target_sync_every: u64,
}

impl QLearnerSettings {
    /// Defaults sized for the tabular-style tasks; callers override fields
    /// as needed.
    pub fn new(input_dim: usize, n_actions: usize) -> QLearnerSettings {
        QLearnerSettings {
            input_dim,
            n_actions,
            hidden: vec![64, 128, 256, 128],
            activation: Activation::Relu,
            dueling: true,
            double: true,
            optimizer: OptimChoice::Adam,
            lr: 0.005,
            gamma: 0.99,
            n_step: NStep::Fixed(10),
            batch_size: 300,
            grad_clip: None,
            target_sync_every: 50,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_actions < 2 {
            return Err(Error::Config(format!(
                "need a positive input dim and at least 2 actions, got {}/{}",
                self.input_dim, self.n_actions
            )));
        }
        if self.lr <= 0.0 || !(0.0..=1.0).contains(&self.gamma) || self.gamma == 0.0 {
            return Err(Error::Config(format!(
                "lr must be positive and gamma in (0,1], got {}/{}",
                self.lr, self.gamma
            )));
        }
        if self.batch_size == 0 || self.target_sync_every == 0 {
            return Err(Error::Config(
                "batch size and target sync period must be positive".into(),
            ));
        }
        match self.n_step {
            NStep::Fixed(n) if n >= 1 => {}
            NStep::Uniform { lo, hi } if lo >= 1 && hi >= lo => {}
            other => {
                return Err(Error::Config(format!(
                    "invalid n-step spec {other:?}; need n >= 1 and lo <= hi"
                )))
            }
        }
        if let Some((lo, hi)) = self.grad_clip {
            if lo >= hi {
                return Err(Error::Config(format!(
                    "gradient clip range is empty: [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Factor applied to the Q-networks' output layer(s) at construction.
const HEAD_INIT_SCALE: f64 = 0.01;

/// n-step double/dueling deep Q-learner over feature vectors.
pub struct QLearner {
    online: NetworkParams,
    target: NetworkParams,
    opt: OptimizerState,
    settings: QLearnerSettings,
    updates: u64,
}

impl QLearner {
    pub fn new(settings: QLearnerSettings, rng: &mut impl Rng) -> Result<QLearner> {
        settings.validate()?;
        let mut dims = vec![settings.input_dim];
        dims.extend_from_slice(&settings.hidden);
        let mut online = if settings.dueling {
            NetworkParams::dueling(&dims, settings.n_actions, settings.activation, rng)?
        } else {
            dims.push(settings.n_actions);
            NetworkParams::mlp(&dims, settings.activation, Output::Linear, rng)?
        };
        // Start the value estimate near zero everywhere. Untrained outputs
        // at full init scale (±0.1ish) feed back through the max bootstrap
        // and decide early greedy actions by init noise; on reward scales
        // of 1e-3 that buries the signal and the greedy policy churns.
        online.scale_output_layer(HEAD_INIT_SCALE);
        let target = online.deep_clone();
        let opt = match settings.optimizer {
            OptimChoice::Adam => OptimizerState::adam(settings.lr),
            OptimChoice::RmsProp => OptimizerState::rmsprop(settings.lr),
        };
        Ok(QLearner {
            online,
            target,
            opt,
            settings,
            updates: 0,
        })
    }

    pub fn settings(&self) -> &QLearnerSettings {
        &self.settings
    }

    pub fn online(&self) -> &NetworkParams {
        &self.online
    }

    pub fn target(&self) -> &NetworkParams {
        &self.target
    }

    /// Completed update calls; doubles as a cache version for the online
    /// net, which changes exactly once per update.
    pub fn updates_done(&self) -> u64 {
        self.updates
    }

    pub fn q_values(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.online.infer_one(features)
    }

    /// Epsilon-greedy choice with the Q-values supplied lazily, so greedy
    /// evaluations can be cached by the caller and exploration steps skip
    /// the network entirely. The exploration coin is always tossed first:
    /// the random stream advances identically whichever branch is taken.
    pub fn select_action_by(
        &self,
        epsilon: f64,
        rng: &mut impl Rng,
        q_of: impl FnOnce() -> Result<Vec<f64>>,
    ) -> Result<usize> {
        if rng.gen::<f64>() < epsilon {
            Ok(rng.gen_range(0..self.settings.n_actions))
        } else {
            Ok(argmax(&q_of()?))
        }
    }

    pub fn select_action(
        &self,
        features: &[f64],
        epsilon: f64,
        rng: &mut impl Rng,
    ) -> Result<usize> {
        self.select_action_by(epsilon, rng, || self.q_values(features))
    }

    /// Scalar regression target for the transition in slot `idx`: up to `n`
    /// rewards along the stored trajectory, discounted, plus a bootstrap on
    /// the state after the last walked transition. The walk stops early at
    /// episode ends (no bootstrap) or when the next transition is no longer
    /// resident (bootstrap where the walk stopped). `reward_of` decides the
    /// trained reward for each walked transition.
    pub fn n_step_return(
        &self,
        replay: &ReplayBuffer,
        idx: usize,
        n: usize,
        reward_of: &mut impl FnMut(&Transition) -> f64,
    ) -> Result<f64> {
        let gamma = self.settings.gamma;
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut cur = idx;
        let mut walked = 1;
        loop {
            let t = replay.get(cur);
            ret += discount * reward_of(t);
            discount *= gamma;
            if t.done {
                return Ok(ret);
            }
            if walked == n {
                break;
            }
            match replay.successor(cur) {
                Some(next) => {
                    cur = next;
                    walked += 1;
                }
                None => break,
            }
        }
        let boot_state = &replay.get(cur).next_features;
        let bootstrap = if self.settings.double {
            let chosen = argmax(&self.online.infer_one(boot_state)?);
            self.target.infer_one(boot_state)?[chosen]
        } else {
            let tq = self.target.infer_one(boot_state)?;
            tq[argmax(&tq)]
        };
        Ok(ret + discount * bootstrap)
    }

    /// One batched update: draw the n-step length (if randomized), sample a
    /// batch, regress `Q(s, a)` toward the n-step targets, and periodically
    /// sync the target net. Random draws happen in a fixed order (length,
    /// then indices) so runs are reproducible. Returns the TD loss.
    pub fn update(
        &mut self,
        replay: &ReplayBuffer,
        rng: &mut impl Rng,
        reward_of: &mut impl FnMut(&Transition) -> f64,
    ) -> Result<f64> {
        let n = match self.settings.n_step {
            NStep::Fixed(k) => k,
            NStep::Uniform { lo, hi } => rng.gen_range(lo..=hi),
        };
        let batch = self.settings.batch_size;
        let idxs = replay.sample_indices(batch, rng)?;

        let input_dim = self.settings.input_dim;
        let mut rows = Vec::with_capacity(batch * input_dim);
        let mut actions = Vec::with_capacity(batch);
        let mut targets = Vec::with_capacity(batch);
        for &idx in &idxs {
            targets.push(self.n_step_return(replay, idx, n, reward_of)?);
            let t = replay.get(idx);
            if t.features.len() != input_dim {
                return Err(Error::Shape(format!(
                    "stored features have {} dims, learner expects {input_dim}",
                    t.features.len()
                )));
            }
            rows.extend_from_slice(&t.features);
            actions.push(t.action);
        }

        let x = Tensor::constant(rows, &[batch, input_dim])?;
        let q_all = self.online.forward(&x)?;
        let q_taken = q_all.gather_cols(&actions)?;
        let target_t = Tensor::constant(targets, &[batch, 1])?;
        let diff = q_taken.sub(&target_t)?;
        let loss = diff.mul(&diff)?.mean_all();
        let loss_value = loss.item()?;
        loss.backward()?;
        let params = self.online.named_tensors();
        if let Some((lo, hi)) = self.settings.grad_clip {
            clip_gradients(&params, lo, hi);
        }
        self.opt.step(&params)?;
        self.updates += 1;
        if self.updates % self.settings.target_sync_every == 0 {
            self.sync_target()?;
        }
        Ok(loss_value)
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_values_from(&self.online)
    }
}
