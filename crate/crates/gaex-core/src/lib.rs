//! Exploration-by-GAN toolkit: a small deep-RL stack in which a GAN
//! discriminator scores state novelty and its miss-probability becomes the
//! agent's intrinsic reward.
//!
//! Layout:
//! - [`tensor`], [`nn`], [`optim`]: hand-rolled reverse-mode autodiff, MLPs
//!   (including a dueling head), Adam/RMSProp.
//! - [`envs`]: chain MDP and a synthetic pixel grid world.
//! - [`abstraction`]: fixed frame-stack -> 148-d feature map for pixels.
//! - [`gan`]: generator/discriminator pair and the intrinsic reward.
//! - [`agent`]: replay, epsilon schedule, n-step double/dueling DQN.
//! - [`oracle`]: exact dynamic-programming references used by the tests and
//!   the CLI.
//! - [`harness`], [`config`], [`metrics`], [`charts`], [`snapshot`]:
//!   experiment runner, TOML config, CSV metrics, SVG charts, binary
//!   parameter snapshots.

pub mod abstraction;
pub mod agent;
pub mod charts;
pub mod config;
pub mod envs;
pub mod error;
pub mod gan;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod oracle;
pub mod snapshot;
pub mod tensor;

pub use abstraction::{FeatureMap, FEATURE_DIM};
pub use agent::{
    EpsilonSchedule, NStep, OptimChoice, QLearner, QLearnerSettings, ReplayBuffer, Transition,
    VisitCounter,
};
pub use config::{Cadence, EnvSpec, Mode, RunConfig};
pub use envs::{ChainEnv, Env, PixelGridEnv, StepOutcome};
pub use harness::{run_ablation, run_experiment, run_training, AblationGrid, TrainingResult};
pub use metrics::{MetricsRecord, CSV_HEADER};
pub use error::{Error, Result};
pub use gan::{intrinsic_reward, GanPair, GanSettings, GanStats};
pub use nn::{Activation, Head, LinearLayer, NetworkParams, Output};
pub use optim::{clip_gradients, OptimKind, OptimizerState};
pub use tensor::Tensor;
