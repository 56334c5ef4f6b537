//! Declarative run configuration, loadable from TOML. A config names the
//! environment, the reward mode (plain DQN, adversarial bonus, frozen-
//! generator bonus, or count bonus), and every learner/GAN hyperparameter;
//! unspecified fields fall back to the chain-task defaults. Builders turn
//! the declarative pieces into live [`QLearnerSettings`], [`GanSettings`],
//! [`EpsilonSchedule`]s and environments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::abstraction::FeatureMap;
use crate::agent::{EpsilonSchedule, NStep, OptimChoice, QLearnerSettings};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::gan::GanSettings;
use crate::nn::Activation;

/// Which environment a run trains on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    /// Left-right chain with `n` states.
    Chain { n: usize },
    /// The synthetic 84x84 pixel grid world.
    PixelGrid,
}

/// What reward the learner trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Extrinsic reward only.
    Dqn,
    /// Extrinsic plus the adversarially trained discriminator bonus.
    GanBonus,
    /// Same bonus, but the generator never trains: the discriminator
    /// faces its initial noise source forever.
    FrozenGanBonus,
    /// Extrinsic plus the tabular `beta / sqrt(visits)` bonus.
    CountBonus,
}

impl Mode {
    pub fn uses_gan(self) -> bool {
        matches!(self, Mode::GanBonus | Mode::FrozenGanBonus)
    }

    pub fn uses_counts(self) -> bool {
        self == Mode::CountBonus
    }
}

/// How often something happens while acting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cadence {
    /// At the end of every `episodes`-th episode.
    Episodes { episodes: u64 },
    /// After every `steps`-th environment step.
    Steps { steps: u64 },
}

/// n-step return length: a constant, or freshly drawn each update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NStepSpec {
    Fixed(usize),
    Uniform { lo: usize, hi: usize },
}

impl NStepSpec {
    fn to_nstep(self) -> NStep {
        match self {
            NStepSpec::Fixed(n) => NStep::Fixed(n),
            NStepSpec::Uniform { lo, hi } => NStep::Uniform { lo, hi },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimName {
    Adam,
    RmsProp,
}

/// Exploration profile: start value and (floor, per-step decrement) stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSpec {
    pub start: f64,
    pub stages: Vec<(f64, f64)>,
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        // The decrement is deliberately gentle: exploration should still be
        // mostly random until a few dozen training rounds have fit the
        // replayed returns, otherwise the greedy phase starts on a cold
        // network and exploits initialization noise instead of values.
        EpsilonSpec {
            start: 1.0,
            stages: vec![(0.0, 5e-5)],
        }
    }
}

/// Learner hyperparameters. Defaults are the chain-task values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub dueling: bool,
    pub double: bool,
    pub optimizer: OptimName,
    pub lr: f64,
    pub gamma: f64,
    pub n_step: NStepSpec,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Training (and epsilon decay) wait until the buffer holds this many
    /// transitions.
    pub replay_start: usize,
    pub grad_clip: Option<(f64, f64)>,
    pub target_sync_every: u64,
    /// When DQN updates run.
    pub train_every: Cadence,
    pub epsilon: EpsilonSpec,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: vec![64, 128, 256, 128],
            dueling: true,
            double: true,
            optimizer: OptimName::Adam,
            lr: 0.005,
            gamma: 0.99,
            n_step: NStepSpec::Fixed(10),
            batch_size: 300,
            replay_capacity: 10_000,
            replay_start: 10_000,
            grad_clip: None,
            target_sync_every: 50,
            train_every: Cadence::Episodes { episodes: 2 },
            epsilon: EpsilonSpec::default(),
        }
    }
}

/// Adversarial-bonus hyperparameters. Defaults are the chain-task values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    /// Latent width; `None` picks the environment's natural size (the
    /// chain's state count, 128 for pixels).
    pub noise_dim: Option<usize>,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub lr: f64,
    /// Run one adversarial round on every this-many-th DQN update.
    pub train_every_updates: u64,
    /// (generator, discriminator) gradient steps per adversarial round.
    pub gd_ratio: (u64, u64),
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            noise_dim: None,
            generator_hidden: vec![50, 50],
            discriminator_hidden: vec![50, 50],
            leaky_slope: 0.01,
            lr: 0.001,
            train_every_updates: 1,
            gd_ratio: (1, 1),
        }
    }
}

/// Scale of whichever intrinsic bonus the mode selects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BonusConfig {
    pub beta: f64,
}

impl Default for BonusConfig {
    fn default() -> Self {
        BonusConfig { beta: 1.0 }
    }
}

/// Optional convergence cut-off: a run may end before its episode budget
/// once the extrinsic return has held at `return_at_least` for
/// `consecutive` episodes in a row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub return_at_least: f64,
    pub consecutive: u64,
}

/// Everything one training run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Episode budget per run.
    #[serde(default = "default_episodes")]
    pub episodes: u64,
    /// Base seed; run r of a multi-run config uses `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub gan: GanConfig,
    #[serde(default)]
    pub bonus: BonusConfig,
}

fn default_mode() -> Mode {
    Mode::GanBonus
}

fn default_episodes() -> u64 {
    3000
}

fn default_runs() -> u64 {
    1
}

impl RunConfig {
    /// Chain run with every hyperparameter at its default.
    pub fn chain(n: usize) -> RunConfig {
        RunConfig {
            env: EnvSpec::Chain { n },
            mode: Mode::GanBonus,
            episodes: default_episodes(),
            seed: 0,
            runs: 1,
            early_stop: None,
            agent: AgentConfig::default(),
            gan: GanConfig::default(),
            bonus: BonusConfig::default(),
        }
    }

    /// Pixel-grid run. Mirrors the frame-based setup: RMSProp, small
    /// batches, clipped gradients, a randomized n-step length, a slow
    /// two-stage epsilon ramp, and a much larger, slower GAN. Replay
    /// capacity and start are scaled down to desk size alongside the
    /// shorter episode budget.
    pub fn pixel() -> RunConfig {
        RunConfig {
            env: EnvSpec::PixelGrid,
            mode: Mode::GanBonus,
            episodes: 200,
            seed: 0,
            runs: 1,
            early_stop: None,
            agent: AgentConfig {
                hidden: vec![64, 128, 256, 128],
                dueling: true,
                double: true,
                optimizer: OptimName::RmsProp,
                lr: 0.00025,
                gamma: 0.99,
                n_step: NStepSpec::Uniform { lo: 1, hi: 10 },
                batch_size: 32,
                replay_capacity: 10_000,
                replay_start: 1_000,
                grad_clip: Some((-1.0, 1.0)),
                target_sync_every: 10_000,
                train_every: Cadence::Steps { steps: 4 },
                epsilon: EpsilonSpec {
                    start: 1.0,
                    stages: vec![(0.1, 1e-6), (0.01, 5e-10)],
                },
            },
            gan: GanConfig {
                noise_dim: Some(128),
                generator_hidden: vec![296, 148, 148],
                discriminator_hidden: vec![148, 74, 74],
                leaky_slope: 0.2,
                lr: 5e-6,
                train_every_updates: 25,
                gd_ratio: (1, 1),
            },
            bonus: BonusConfig { beta: 30.0 },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        RunConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let EnvSpec::Chain { n } = self.env {
            if n < 3 {
                return Err(Error::Config(format!(
                    "a chain needs at least 3 states, got {n}"
                )));
            }
        }
        if self.episodes == 0 || self.runs == 0 {
            return Err(Error::Config(
                "episode and run counts must be positive".into(),
            ));
        }
        if self.bonus.beta < 0.0 || !self.bonus.beta.is_finite() {
            return Err(Error::Config(format!(
                "bonus scale must be finite and non-negative, got {}",
                self.bonus.beta
            )));
        }
        if self.agent.replay_start == 0 || self.agent.replay_start > self.agent.replay_capacity {
            return Err(Error::Config(format!(
                "replay start {} must lie in 1..=capacity {}",
                self.agent.replay_start, self.agent.replay_capacity
            )));
        }
        match self.agent.train_every {
            Cadence::Episodes { episodes: 0 } | Cadence::Steps { steps: 0 } => {
                return Err(Error::Config("training cadence must be positive".into()))
            }
            _ => {}
        }
        if self.gan.train_every_updates == 0 {
            return Err(Error::Config(
                "adversarial cadence must be at least every 1 update".into(),
            ));
        }
        if self.gan.gd_ratio.0 == 0 || self.gan.gd_ratio.1 == 0 {
            return Err(Error::Config(
                "generator/discriminator cadences must be positive".into(),
            ));
        }
        if let Some(stop) = self.early_stop {
            if stop.consecutive == 0 {
                return Err(Error::Config(
                    "early stop needs at least 1 consecutive episode".into(),
                ));
            }
        }
        // The pieces that build networks re-validate their own ranges;
        // surface those errors now rather than mid-run.
        self.epsilon_schedule()?;
        Ok(())
    }

    /// The feature transform between raw observations and every network.
    pub fn feature_map(&self) -> FeatureMap {
        match self.env {
            EnvSpec::Chain { .. } => FeatureMap::Identity,
            EnvSpec::PixelGrid => FeatureMap::PixelSummary,
        }
    }

    pub fn make_env(&self) -> Result<Env> {
        match self.env {
            EnvSpec::Chain { n } => Ok(Env::chain(n)?),
            EnvSpec::PixelGrid => Ok(Env::pixel_grid()),
        }
    }

    pub fn epsilon_schedule(&self) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(self.agent.epsilon.start, &self.agent.epsilon.stages)
    }

    /// Learner settings for an environment with the given feature and
    /// action dimensions.
    pub fn learner_settings(&self, input_dim: usize, n_actions: usize) -> QLearnerSettings {
        QLearnerSettings {
            input_dim,
            n_actions,
            hidden: self.agent.hidden.clone(),
            activation: Activation::Relu,
            dueling: self.agent.dueling,
            double: self.agent.double,
            optimizer: match self.agent.optimizer {
                OptimName::Adam => OptimChoice::Adam,
                OptimName::RmsProp => OptimChoice::RmsProp,
            },
            lr: self.agent.lr,
            gamma: self.agent.gamma,
            n_step: self.agent.n_step.to_nstep(),
            batch_size: self.agent.batch_size,
            grad_clip: self.agent.grad_clip,
            target_sync_every: self.agent.target_sync_every,
        }
    }

    /// Adversarial-pair settings for `feature_dim`-wide states.
    pub fn gan_settings(&self, feature_dim: usize) -> GanSettings {
        let noise_dim = self.gan.noise_dim.unwrap_or(match self.env {
            EnvSpec::Chain { n } => n,
            EnvSpec::PixelGrid => 128,
        });
        GanSettings {
            feature_dim,
            noise_dim,
            generator_hidden: self.gan.generator_hidden.clone(),
            discriminator_hidden: self.gan.discriminator_hidden.clone(),
            leaky_slope: self.gan.leaky_slope,
            generator_lr: self.gan.lr,
            discriminator_lr: self.gan.lr,
            generator_steps: self.gan.gd_ratio.0 as usize,
            discriminator_steps: self.gan.gd_ratio.1 as usize,
            freeze_generator: self.mode == Mode::FrozenGanBonus,
        }
    }
}
