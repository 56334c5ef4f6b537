//! Piecewise-linear exploration schedule: epsilon starts high and is
//! decremented by a fixed amount per counted step until it reaches a
//! stage's floor, then continues with the next stage's (usually slower)
//! decrement. Evaluation is a pure function of the step count, so resuming
//! a run reproduces the schedule exactly.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Stage {
    floor: f64,
    decrement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonSchedule {
    start: f64,
    stages: Vec<Stage>,
}

impl EpsilonSchedule {
    /// Single linear ramp from `start` down to `end`.
    pub fn linear(start: f64, end: f64, decrement: f64) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(start, &[(end, decrement)])
    }

    /// Fast ramp to `mid`, then a slower one to `end`.
    pub fn two_stage(
        start: f64,
        mid: f64,
        first_decrement: f64,
        end: f64,
        second_decrement: f64,
    ) -> Result<EpsilonSchedule> {
        EpsilonSchedule::new(start, &[(mid, first_decrement), (end, second_decrement)])
    }

    /// `stages` are (floor, decrement) pairs with strictly descending
    /// floors; every value must stay inside [0, 1].
    pub fn new(start: f64, stages: &[(f64, f64)]) -> Result<EpsilonSchedule> {
        if !(0.0..=1.0).contains(&start) {
            return Err(Error::Config(format!(
                "epsilon must start in [0,1], got {start}"
            )));
        }
        if stages.is_empty() {
            return Err(Error::Config("schedule needs at least one stage".into()));
        }
        let mut prev = start;
        for &(floor, dec) in stages {
            if !(0.0..=1.0).contains(&floor) || floor >= prev {
                return Err(Error::Config(format!(
                    "stage floors must descend within [0,1]: {floor} after {prev}"
                )));
            }
            if dec <= 0.0 || !dec.is_finite() {
                return Err(Error::Config(format!(
                    "per-step decrement must be positive, got {dec}"
                )));
            }
            prev = floor;
        }
        Ok(EpsilonSchedule {
            start,
            stages: stages
                .iter()
                .map(|&(floor, decrement)| Stage { floor, decrement })
                .collect(),
        })
    }

    /// Epsilon after `steps` counted steps.
    pub fn value(&self, steps: u64) -> f64 {
        let mut eps = self.start;
        let mut remaining = steps as f64;
        for stage in &self.stages {
            let span = (eps - stage.floor) / stage.decrement;
            if remaining < span {
                return (eps - remaining * stage.decrement).max(stage.floor);
            }
            remaining -= span.ceil();
            eps = stage.floor;
        }
        eps
    }

    /// The value the schedule settles at.
    pub fn final_value(&self) -> f64 {
        self.stages.last().expect("validated non-empty").floor
    }
}
