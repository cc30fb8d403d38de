//! The metric suite: success rate and confidence drop per policy group,
//! prediction error as a function of observation, and timing-error
//! distributions. Every function here is pure over in-memory records, so
//! metrics recomputed from persisted files match in-memory values exactly.

use std::collections::BTreeMap;

use crate::dataset::Corpus;
use crate::error::{Result, RtError};
use crate::expert::DemoSet;
use crate::generator::GeneratorNet;
use crate::simulator::OutcomeRecord;

/// Success rate and mean confidence drop for one (policy, amplitude) group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub policy: String,
    pub amplitude: f64,
    pub count: usize,
    pub success_rate: f64,
    pub mean_drop: f64,
}

/// Group outcomes by (policy, amplitude) and reduce. Groups come back sorted
/// by policy token, then amplitude; empty groups cannot appear (a group
/// exists only if at least one outcome formed it) — callers that expect a
/// group and find none should warn and omit it.
pub fn eval_success_and_drop(outcomes: &[OutcomeRecord]) -> Vec<GroupStats> {
    let mut groups: BTreeMap<(String, u64), (usize, usize, f64)> = BTreeMap::new();
    for o in outcomes {
        let e = groups
            .entry((o.policy.clone(), o.amplitude.to_bits()))
            .or_insert((0, 0, 0.0));
        e.0 += 1;
        e.1 += usize::from(o.success);
        e.2 += o.confidence_drop();
    }
    groups
        .into_iter()
        .map(|((policy, bits), (count, hits, drop))| GroupStats {
            policy,
            amplitude: f64::from_bits(bits),
            count,
            success_rate: hits as f64 / count as f64,
            mean_drop: drop / count as f64,
        })
        .collect()
}

/// Select one group from a stats list.
pub fn find_group<'a>(
    stats: &'a [GroupStats],
    policy: &str,
    amplitude: f64,
) -> Option<&'a GroupStats> {
    stats
        .iter()
        .find(|g| g.policy == policy && g.amplitude == amplitude)
}

/// Mean absolute schedule error (normalized time units) as a function of the
/// observed fraction of the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrorCurve {
    /// Observation fractions 0.0, 0.1, ..., 1.0.
    pub fractions: Vec<f64>,
    /// Mean absolute error per fraction, averaged over samples and ranks.
    pub mean_abs_error: Vec<f64>,
    /// Per-sample error traces (heatmap rows), ascending sample id.
    pub per_sample: Vec<(u64, Vec<f64>)>,
}

/// Evaluate the generator's schedule prediction against the expert's at
/// eleven observation prefixes per sample. Errors compare decoded start
/// positions normalized by the largest valid start, paired by segment rank.
pub fn eval_prediction_error_curve(
    gen: &GeneratorNet,
    demos: &DemoSet,
    corpus: &Corpus,
    ids: &[u64],
) -> Result<PredictionErrorCurve> {
    let norm = gen.config().norm as f64;
    let mut wanted: Vec<u64> = ids.to_vec();
    wanted.sort_unstable();
    let mut per_sample = Vec::with_capacity(wanted.len());
    for id in wanted {
        let traj = demos
            .usable()
            .find(|t| t.sample_id == id)
            .ok_or_else(|| RtError::config(format!("no usable demonstration for sample {id}")))?;
        let sample = corpus
            .by_id(id)
            .ok_or_else(|| RtError::config(format!("sample {id} not in the corpus")))?;
        let expert: Vec<f64> = traj.starts.iter().map(|&s| s as f64 / norm).collect();
        let n = sample.values.len();
        let mut errs = Vec::with_capacity(11);
        for i in 0..=10usize {
            let prefix = i * n / 10;
            let decoded = gen.decode_starts(&gen.predict_full(&sample.values[..prefix]));
            let mae = decoded
                .iter()
                .zip(&expert)
                .map(|(&p, &e)| (p as f64 / norm - e).abs())
                .sum::<f64>()
                / expert.len() as f64;
            errs.push(mae);
        }
        per_sample.push((id, errs));
    }
    if per_sample.is_empty() {
        return Err(RtError::config("prediction error curve needs at least one sample"));
    }
    let fractions: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mean_abs_error: Vec<f64> = (0..=10)
        .map(|i| per_sample.iter().map(|(_, e)| e[i]).sum::<f64>() / per_sample.len() as f64)
        .collect();
    Ok(PredictionErrorCurve {
        fractions,
        mean_abs_error,
        per_sample,
    })
}

/// Fixed-bin histogram over signed normalized errors in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        Histogram {
            lo: -1.0,
            hi: 1.0,
            counts: vec![0; bins],
        }
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len() as f64;
        let idx = ((v - self.lo) / (self.hi - self.lo) * bins).floor();
        let idx = (idx.max(0.0) as usize).min(self.counts.len() - 1);
        self.counts[idx] += 1;
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + i as f64 * w, self.lo + (i + 1) as f64 * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingErrorStats {
    /// Trials with every segment emitted, paired against their expert times.
    pub paired_trials: usize,
    /// Trials excluded (and reported separately) because a segment dropped.
    pub dropped_trials: usize,
    /// Mean |actual emission time - expert time|, normalized units.
    pub mean_abs_actual: f64,
    /// Mean |full-observation predicted time - expert time|, same samples.
    pub mean_abs_predicted: f64,
    pub mean_signed_actual: f64,
    pub std_signed_actual: f64,
    pub histogram: Histogram,
}

/// Timing analysis of realtime outcomes against the expert's schedules.
/// Pairing is per-segment by rank after sorting both schedules. `outcomes`
/// should already be filtered to one realtime group.
pub fn eval_timing_error(
    outcomes: &[OutcomeRecord],
    demos: &DemoSet,
    gen: &GeneratorNet,
    corpus: &Corpus,
) -> Result<TimingErrorStats> {
    let norm = gen.config().norm as f64;
    let mut histogram = Histogram::new(20);
    let mut paired = 0usize;
    let mut dropped = 0usize;
    let mut abs_actual = 0.0;
    let mut abs_pred = 0.0;
    let mut signed_sum = 0.0;
    let mut signed_sq = 0.0;
    let mut signed_n = 0usize;
    for o in outcomes {
        let traj = demos
            .usable()
            .find(|t| t.sample_id == o.sample_id)
            .ok_or_else(|| {
                RtError::config(format!("no usable demonstration for sample {}", o.sample_id))
            })?;
        if o.dropped() > 0 {
            dropped += 1;
            continue;
        }
        let sample = corpus
            .by_id(o.sample_id)
            .ok_or_else(|| RtError::config(format!("sample {} not in the corpus", o.sample_id)))?;
        let actual = o.realized_schedule();
        if actual.len() != traj.starts.len() {
            return Err(RtError::config(format!(
                "sample {}: {} emissions vs {} expert segments",
                o.sample_id,
                actual.len(),
                traj.starts.len()
            )));
        }
        let predicted = gen.decode_starts(&gen.predict_full(&sample.values));
        for r in 0..actual.len() {
            let expert = traj.starts[r] as f64 / norm;
            let act = actual[r] as f64 / norm - expert;
            let pred = predicted[r] as f64 / norm - expert;
            abs_actual += act.abs();
            abs_pred += pred.abs();
            signed_sum += act;
            signed_sq += act * act;
            signed_n += 1;
            histogram.add(act);
        }
        paired += 1;
    }
    if signed_n == 0 {
        return Err(RtError::config(
            "timing error analysis needs at least one fully-emitted trial",
        ));
    }
    let mean_signed = signed_sum / signed_n as f64;
    let var = (signed_sq / signed_n as f64 - mean_signed * mean_signed).max(0.0);
    Ok(TimingErrorStats {
        paired_trials: paired,
        dropped_trials: dropped,
        mean_abs_actual: abs_actual / signed_n as f64,
        mean_abs_predicted: abs_pred / signed_n as f64,
        mean_signed_actual: mean_signed,
        std_signed_actual: var.sqrt(),
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(policy: &str, amp: f64, success: bool, drop: f64) -> OutcomeRecord {
        OutcomeRecord {
            sample_id: 1,
            policy: policy.to_string(),
            amplitude: amp,
            success,
            original_class: 0,
            original_confidence: 0.9,
            final_confidence: 0.9 - drop,
            emitted: vec![Some(30)],
            trace: vec![],
            l0: 10,
        }
    }

    #[test]
    fn groups_reduce_and_sort() {
        let outcomes = vec![
            record("realtime:0.5", 0.5, true, 0.8),
            record("expert:0.5", 0.5, true, 0.9),
            record("realtime:0.5", 0.5, false, 0.1),
            record("expert:0.5", 0.1, false, 0.0),
        ];
        let stats = eval_success_and_drop(&outcomes);
        assert_eq!(stats.len(), 3);
        assert_eq!(stats[0].policy, "expert:0.5");
        assert_eq!(stats[0].amplitude, 0.1);
        assert_eq!(stats[1].amplitude, 0.5);
        let rt = find_group(&stats, "realtime:0.5", 0.5).unwrap();
        assert_eq!(rt.count, 2);
        assert!((rt.success_rate - 0.5).abs() < 1e-15);
        assert!((rt.mean_drop - 0.45).abs() < 1e-12);
        assert!(find_group(&stats, "random", 0.5).is_none());
    }

    #[test]
    fn all_null_outcomes_give_zero_rate_and_drop() {
        let outcomes: Vec<OutcomeRecord> = (0..5)
            .map(|i| {
                let mut r = record("null", 0.5, false, 0.0);
                r.sample_id = i;
                r.emitted = vec![None];
                r.l0 = 0;
                r
            })
            .collect();
        let stats = eval_success_and_drop(&outcomes);
        assert_eq!(stats.len(), 1);
        assert_eq!(stats[0].success_rate, 0.0);
        assert_eq!(stats[0].mean_drop, 0.0);
        assert_eq!(stats[0].count, 5);
    }

    #[test]
    fn histogram_bins_cover_and_clamp() {
        let mut h = Histogram::new(20);
        h.add(-1.0); // lowest bin
        h.add(0.0); // first bin at or above 0
        h.add(1.0); // clamped into the top bin
        h.add(2.0); // clamped
        h.add(-0.95);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[10], 1);
        assert_eq!(h.counts[19], 2);
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        let (lo, hi) = h.bin_edges(10);
        assert!((lo - 0.0).abs() < 1e-12 && (hi - 0.1).abs() < 1e-12);
    }
}
