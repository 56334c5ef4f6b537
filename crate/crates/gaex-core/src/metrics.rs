//! Per-episode training metrics and their CSV round-trip. One record per
//! episode per run; the column set is part of the tool's output contract,
//! so the header string is pinned here and checked by tests. Floats are
//! written in shortest-round-trip form and read back bit-for-bit;
//! diagnostics that did not occur in an episode (no update yet, no
//! adversarial round, non-adversarial mode) stay empty rather than zero.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// The exact column order every metrics CSV uses.
pub const CSV_HEADER: &str =
    "run,seed,episode,steps,ext_return,int_return,max_state,d_real,d_fake,d_loss,g_loss,td_loss,epsilon";

/// One episode of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Run index within the experiment (0-based).
    pub run: u64,
    /// The seed that run trained under.
    pub seed: u64,
    /// Episode index within the run (0-based).
    pub episode: u64,
    /// Environment steps the episode took.
    pub steps: u64,
    /// Undiscounted extrinsic return.
    pub ext_return: f64,
    /// Undiscounted sum of the intrinsic bonuses the agent would have been
    /// paid along the episode's path (diagnostic; zero for plain DQN).
    pub int_return: f64,
    /// Environment progress marker: the furthest 1-based chain state
    /// visited, or the largest start-distance reached on the grid.
    pub max_state: u64,
    /// Mean discriminator score on real states over the episode's
    /// adversarial rounds, if any ran.
    pub d_real: Option<f64>,
    /// Mean discriminator score on generated states.
    pub d_fake: Option<f64>,
    /// Mean discriminator loss.
    pub d_loss: Option<f64>,
    /// Mean generator loss.
    pub g_loss: Option<f64>,
    /// Mean TD loss over the episode's DQN updates, if any ran.
    pub td_loss: Option<f64>,
    /// Exploration rate at the end of the episode.
    pub epsilon: f64,
}

impl MetricsRecord {
    /// Bit-exact view of everything the behaviour policy can influence —
    /// all columns except the four adversarial diagnostics. Two runs whose
    /// agents acted identically produce equal keys even if one of them
    /// additionally trained a GAN on the side.
    pub fn trajectory_bits(&self) -> [u64; 9] {
        [
            self.run,
            self.seed,
            self.episode,
            self.steps,
            self.ext_return.to_bits(),
            self.int_return.to_bits(),
            self.max_state,
            self.td_loss.map_or(u64::MAX, f64::to_bits),
            self.epsilon.to_bits(),
        ]
    }
}

/// Serialize records (with header) to any writer.
pub fn write_csv<W: Write>(writer: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_csv(std::fs::File::create(path)?, records)
}

/// Parse records back; the header must match the pinned column set.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

pub fn read_csv_path(path: &Path) -> Result<Vec<MetricsRecord>> {
    read_csv(std::fs::File::open(path)?)
}
