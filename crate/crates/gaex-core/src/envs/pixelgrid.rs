//! Synthetic pixel grid world: a bright agent sprite on a dark 84x84 frame,
//! rendered at 4 pixels per cell over a 21x21 logical grid. Observations
//! stack the last four frames; reset repeats the first frame four times.
//! Reaching the goal cell pays 1 and ends the episode; otherwise episodes
//! run a fixed 500-step horizon. The layout is fixed, so the environment is
//! fully deterministic.

use crate::error::{Error, Result};

use super::chain::StepOutcome;

pub const GRID_CELLS: usize = 21;
pub const CELL_PX: usize = 4;
pub const FRAME_SIDE: usize = GRID_CELLS * CELL_PX; // 84
pub const FRAME_LEN: usize = FRAME_SIDE * FRAME_SIDE;
pub const HISTORY: usize = 4;
pub const HORIZON: usize = 500;

const AGENT_START: (usize, usize) = (2, 2);
const GOAL_CELL: (usize, usize) = (18, 18);
const AGENT_VALUE: f64 = 1.0;
const GOAL_VALUE: f64 = 0.5;

pub const ACTION_UP: usize = 0;
pub const ACTION_DOWN: usize = 1;
pub const ACTION_GRID_LEFT: usize = 2;
pub const ACTION_GRID_RIGHT: usize = 3;
pub const ACTION_STAY: usize = 4;

#[derive(Clone)]
pub struct PixelGridEnv {
    /// Agent cell as (row, col).
    agent: (usize, usize),
    frames: Vec<Vec<f64>>,
    step: usize,
    done: bool,
}

impl PixelGridEnv {
    pub fn new() -> PixelGridEnv {
        let mut env = PixelGridEnv {
            agent: AGENT_START,
            frames: Vec::new(),
            step: 0,
            done: false,
        };
        env.reset();
        env
    }

    pub fn num_actions(&self) -> usize {
        5
    }

    pub fn obs_dim(&self) -> usize {
        HISTORY * FRAME_LEN
    }

    pub fn agent_cell(&self) -> (usize, usize) {
        self.agent
    }

    /// Manhattan distance of the agent from its start cell; the progress
    /// marker run metrics report for this environment.
    pub fn start_distance(&self) -> u64 {
        let (r, c) = self.agent;
        (r.abs_diff(AGENT_START.0) + c.abs_diff(AGENT_START.1)) as u64
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.agent = AGENT_START;
        self.step = 0;
        self.done = false;
        let first = self.render();
        self.frames = vec![first; HISTORY];
        self.observation()
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract(
                "step on a finished grid episode; call reset first".into(),
            ));
        }
        let (dr, dc): (isize, isize) = match action {
            ACTION_UP => (-1, 0),
            ACTION_DOWN => (1, 0),
            ACTION_GRID_LEFT => (0, -1),
            ACTION_GRID_RIGHT => (0, 1),
            ACTION_STAY => (0, 0),
            other => {
                return Err(Error::Contract(format!(
                    "grid actions are 0..=4, got {other}"
                )))
            }
        };
        let clamp = |v: isize| v.clamp(0, GRID_CELLS as isize - 1) as usize;
        self.agent = (
            clamp(self.agent.0 as isize + dr),
            clamp(self.agent.1 as isize + dc),
        );
        self.step += 1;
        let reached = self.agent == GOAL_CELL;
        self.done = reached || self.step >= HORIZON;
        let frame = self.render();
        self.frames.rotate_left(1);
        *self.frames.last_mut().expect("history nonempty") = frame;
        Ok(StepOutcome {
            obs: self.observation(),
            reward: if reached { 1.0 } else { 0.0 },
            done: self.done,
        })
    }

    /// Last four frames, oldest first, each 84x84 row-major in `[0,1]`.
    pub fn observation(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.obs_dim());
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out
    }

    fn render(&self) -> Vec<f64> {
        let mut frame = vec![0.0; FRAME_LEN];
        fill_cell(&mut frame, GOAL_CELL, GOAL_VALUE);
        fill_cell(&mut frame, self.agent, AGENT_VALUE);
        frame
    }
}

impl Default for PixelGridEnv {
    fn default() -> Self {
        Self::new()
    }
}

fn fill_cell(frame: &mut [f64], cell: (usize, usize), value: f64) {
    let (row, col) = cell;
    for pr in 0..CELL_PX {
        let base = (row * CELL_PX + pr) * FRAME_SIDE + col * CELL_PX;
        for v in frame[base..base + CELL_PX].iter_mut() {
            *v = value;
        }
    }
}
