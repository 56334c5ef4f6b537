//! Tabular visit counter and the classic count-based exploration bonus
//! `beta / sqrt(visits)`. States are keyed by the exact bit pattern of
//! their feature vectors, which is precise for discrete encodings such as
//! one-hot states; it is the comparison baseline, not something meant for
//! continuous features.

use std::collections::HashMap;

/// Visit counts keyed by feature bit patterns.
#[derive(Default)]
pub struct VisitCounter {
    counts: HashMap<Vec<u64>, u64>,
}

fn key_of(features: &[f64]) -> Vec<u64> {
    features.iter().map(|v| v.to_bits()).collect()
}

impl VisitCounter {
    pub fn new() -> VisitCounter {
        VisitCounter::default()
    }

    /// Record one visit; returns the updated count.
    pub fn observe(&mut self, features: &[f64]) -> u64 {
        let e = self.counts.entry(key_of(features)).or_insert(0);
        *e += 1;
        *e
    }

    pub fn count(&self, features: &[f64]) -> u64 {
        self.counts.get(&key_of(features)).copied().unwrap_or(0)
    }

    /// Number of distinct states seen so far.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// `beta / sqrt(visits)`; a never-visited state pays the full `beta`,
    /// same as a first visit.
    pub fn bonus(&self, features: &[f64], beta: f64) -> f64 {
        match self.count(features) {
            0 => beta,
            n => beta / (n as f64).sqrt(),
        }
    }
}
