//! Fixed (non-learned) feature map for pixel observations. A stack of four
//! 84x84 grayscale frames is compressed to 148 numbers: an 8x8 thumbnail of
//! the oldest frame, plus the row and column means of an exponentially
//! decayed motion image built from the frame-to-frame differences. The
//! whole vector is scaled by 1/10 to keep magnitudes small for the
//! downstream networks.

use crate::envs::pixelgrid::{FRAME_LEN, FRAME_SIDE, HISTORY};
use crate::error::{Error, Result};

/// Length of the produced feature vector: 64 thumbnail values + 42 row
/// means + 42 column means.
pub const FEATURE_DIM: usize = THUMB_SIDE * THUMB_SIDE + 2 * MOTION_SIDE;

const THUMB_SIDE: usize = 8;
const MOTION_SIDE: usize = 42;
/// Weight carried over when folding successive frame differences together.
const MOTION_DECAY: f64 = 0.8;
const OUTPUT_SCALE: f64 = 0.1;

/// How raw observations are presented to the networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureMap {
    /// Pass the observation through untouched (tabular-style inputs such as
    /// the chain's one-hot states).
    Identity,
    /// Thumbnail + motion-profile summary of a four-frame pixel stack.
    PixelSummary,
}

impl FeatureMap {
    /// Dimension of the mapped vector for an `obs_dim`-long observation.
    pub fn output_dim(&self, obs_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => obs_dim,
            FeatureMap::PixelSummary => FEATURE_DIM,
        }
    }

    pub fn apply(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureMap::Identity => Ok(obs.to_vec()),
            FeatureMap::PixelSummary => summarize_frame_stack(obs),
        }
    }
}

/// Area-average a square `src_side` x `src_side` image down to
/// `dst_side` x `dst_side`. Each output pixel is the mean of the source
/// block `[floor(r*s/d), floor((r+1)*s/d))` x `[floor(c*s/d), ...)`, so
/// uneven ratios (84 -> 8) alternate block sizes but still tile the image
/// exactly.
pub fn rescale(src: &[f64], src_side: usize, dst_side: usize) -> Result<Vec<f64>> {
    if src.len() != src_side * src_side {
        return Err(Error::Shape(format!(
            "expected a {src_side}x{src_side} image ({} values), got {}",
            src_side * src_side,
            src.len()
        )));
    }
    if dst_side == 0 || dst_side > src_side {
        return Err(Error::Shape(format!(
            "cannot rescale a {src_side}-wide image to {dst_side}"
        )));
    }
    let mut out = Vec::with_capacity(dst_side * dst_side);
    for r in 0..dst_side {
        let r0 = r * src_side / dst_side;
        let r1 = (r + 1) * src_side / dst_side;
        for c in 0..dst_side {
            let c0 = c * src_side / dst_side;
            let c1 = (c + 1) * src_side / dst_side;
            let mut sum = 0.0;
            for row in r0..r1 {
                for col in c0..c1 {
                    sum += src[row * src_side + col];
                }
            }
            out.push(sum / ((r1 - r0) * (c1 - c0)) as f64);
        }
    }
    Ok(out)
}

/// The pixel summary itself: `obs` must hold [`HISTORY`] frames of
/// [`FRAME_LEN`] values, oldest first, as produced by the pixel grid
/// environment.
fn summarize_frame_stack(obs: &[f64]) -> Result<Vec<f64>> {
    if obs.len() != HISTORY * FRAME_LEN {
        return Err(Error::Shape(format!(
            "expected {HISTORY} frames of {FRAME_LEN} pixels ({} values), got {}",
            HISTORY * FRAME_LEN,
            obs.len()
        )));
    }
    let frames: Vec<&[f64]> = obs.chunks(FRAME_LEN).collect();

    let thumb = rescale(frames[0], FRAME_SIDE, THUMB_SIDE)?;

    // Fold the three successive differences into one decayed motion image.
    let mut motion = vec![0.0; FRAME_LEN];
    for i in 1..HISTORY {
        for (m, (&new, &old)) in motion.iter_mut().zip(frames[i].iter().zip(frames[i - 1])) {
            *m = MOTION_DECAY * *m + (new - old);
        }
    }
    let motion = rescale(&motion, FRAME_SIDE, MOTION_SIDE)?;

    let mut features = Vec::with_capacity(FEATURE_DIM);
    features.extend_from_slice(&thumb);
    for r in 0..MOTION_SIDE {
        let row = &motion[r * MOTION_SIDE..(r + 1) * MOTION_SIDE];
        features.push(row.iter().sum::<f64>() / MOTION_SIDE as f64);
    }
    for c in 0..MOTION_SIDE {
        let col: f64 = (0..MOTION_SIDE).map(|r| motion[r * MOTION_SIDE + c]).sum();
        features.push(col / MOTION_SIDE as f64);
    }
    for f in features.iter_mut() {
        *f *= OUTPUT_SCALE;
    }
    Ok(features)
}
