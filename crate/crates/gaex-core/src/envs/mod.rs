//! Reference environments and the enum the harness trains against.

pub mod chain;
pub mod pixelgrid;

pub use chain::{chain_decode, chain_encode, ChainEnv, ChainState, StepOutcome};
pub use pixelgrid::PixelGridEnv;

use crate::error::Result;

/// Concrete environment dispatch for the training loop.
#[derive(Clone)]
pub enum Env {
    Chain(ChainEnv),
    PixelGrid(PixelGridEnv),
}

impl Env {
    pub fn chain(n: usize) -> Result<Env> {
        Ok(Env::Chain(ChainEnv::new(n)?))
    }

    pub fn pixel_grid() -> Env {
        Env::PixelGrid(PixelGridEnv::new())
    }

    pub fn reset(&mut self) -> Vec<f64> {
        match self {
            Env::Chain(e) => e.reset(),
            Env::PixelGrid(e) => e.reset(),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        match self {
            Env::Chain(e) => e.step(action),
            Env::PixelGrid(e) => e.step(action),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Env::Chain(e) => e.num_actions(),
            Env::PixelGrid(e) => e.num_actions(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Env::Chain(e) => e.obs_dim(),
            Env::PixelGrid(e) => e.obs_dim(),
        }
    }

    /// Chain index for progress metrics; grid episodes report none.
    pub fn chain_index(&self) -> Option<usize> {
        match self {
            Env::Chain(e) => Some(e.state().index),
            Env::PixelGrid(_) => None,
        }
    }

    /// Scalar progress marker for run metrics: the 1-based chain state, or
    /// the agent's Manhattan distance from its start cell.
    pub fn progress(&self) -> u64 {
        match self {
            Env::Chain(e) => e.state().index as u64,
            Env::PixelGrid(e) => e.start_distance(),
        }
    }
}
