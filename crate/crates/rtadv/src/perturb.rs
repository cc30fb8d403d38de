//! Additive segment perturbations.
//!
//! An attack emits a fixed number of constant-amplitude noise segments; a
//! schedule is just the sorted list of segment start indices. Realization
//! turns a schedule into a dense additive vector over the stream (overlapping
//! segments merge: the support is the union of the runs, the value on the
//! support is the amplitude). Application adds the vector to a sample and
//! clips to the valid signal range [-1, 1].

use crate::error::{Result, RtError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    /// Stream length in points.
    pub n: usize,
    /// Number of noise segments the attacker may place.
    pub n_segments: usize,
    /// Length of each segment in points.
    pub segment_len: usize,
    /// Additive value on the support; must lie in (0, 1].
    pub amplitude: f64,
}

impl PerturbConfig {
    pub fn new(n: usize, n_segments: usize, segment_len: usize, amplitude: f64) -> Result<Self> {
        if segment_len == 0 || n_segments == 0 {
            return Err(RtError::config(
                "perturbation needs positive n_segments and segment_len",
            ));
        }
        if n_segments * segment_len >= n {
            return Err(RtError::config(format!(
                "total perturbation {} points must be shorter than the stream ({} points)",
                n_segments * segment_len,
                n
            )));
        }
        if !(amplitude > 0.0 && amplitude <= 1.0) {
            return Err(RtError::config(format!(
                "amplitude must be in (0, 1], got {amplitude}"
            )));
        }
        Ok(PerturbConfig {
            n,
            n_segments,
            segment_len,
            amplitude,
        })
    }

    /// Largest valid start index: a segment must fit inside the stream.
    pub fn max_start(&self) -> usize {
        self.n - self.segment_len
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        PerturbConfig::new(self.n, self.n_segments, self.segment_len, amplitude)
    }
}

/// Sorted segment start indices, all within `[0, max_start]`. The number of
/// starts may be smaller than `n_segments` (segments can be dropped by the
/// online policy), never larger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmissionSchedule {
    starts: Vec<usize>,
}

impl EmissionSchedule {
    pub fn new(mut starts: Vec<usize>, cfg: &PerturbConfig) -> Result<Self> {
        if starts.len() > cfg.n_segments {
            return Err(RtError::config(format!(
                "{} starts exceed the {}-segment budget",
                starts.len(),
                cfg.n_segments
            )));
        }
        starts.sort_unstable();
        if let Some(&last) = starts.last() {
            if last > cfg.max_start() {
                return Err(RtError::config(format!(
                    "start {last} exceeds max start {} (stream {} / segment {})",
                    cfg.max_start(),
                    cfg.n,
                    cfg.segment_len
                )));
            }
        }
        Ok(EmissionSchedule { starts })
    }

    pub fn empty() -> Self {
        EmissionSchedule { starts: Vec::new() }
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

/// Dense additive perturbation for a schedule: `amplitude` on the union of
/// the segment runs, zero elsewhere.
pub fn realize(schedule: &EmissionSchedule, cfg: &PerturbConfig) -> Vec<f64> {
    let mut r = vec![0.0; cfg.n];
    for &s in schedule.starts() {
        for v in &mut r[s..s + cfg.segment_len] {
            *v = cfg.amplitude;
        }
    }
    r
}

/// Add the perturbation and clip to the valid signal range.
pub fn apply(sample: &[f64], r: &[f64]) -> Vec<f64> {
    assert_eq!(sample.len(), r.len(), "perturbation length mismatch");
    sample
        .iter()
        .zip(r)
        .map(|(x, v)| (x + v).clamp(-1.0, 1.0))
        .collect()
}

/// Number of nonzero points (size of the perturbation support).
pub fn l0(r: &[f64]) -> usize {
    r.iter().filter(|v| **v != 0.0).count()
}
