//! Streaming attack execution under the causality constraint.
//!
//! The stream is revealed point by point. A policy makes decisions only at
//! update boundaries (multiples of the update period `U`), and a decision
//! made at boundary `t` may use observations up to index `t - d - 1` only —
//! the processing delay `d` separates the last observed point from the
//! earliest point a decision can affect. The realized perturbation therefore
//! has a hard zero prefix: `r[i] == 0` for every `i <= d`. Decisions are
//! quantized to boundaries, so the first window that may emit starts at the
//! smallest multiple of `U` at or above `d + 1`.
//!
//! The victim sees the perturbed stream; its classification is queried
//! exactly once, at the end. The attacker observes the *clean* stream (in the
//! over-the-air threat model the attacker hears the speaker, not its own
//! noise as mixed at the victim's microphone).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::TimeSeriesSample;
use crate::error::{Result, RtError};
use crate::generator::GeneratorNet;
use crate::perturb::{apply, l0, EmissionSchedule, PerturbConfig};
use crate::target::{argmax, BlackBox};

/// Timing regime plus the perturbation the policy may place.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    /// Processing delay in points: observations lag decisions by `d`.
    pub delay: usize,
    /// Decision cadence in points.
    pub update_period: usize,
    pub perturb: PerturbConfig,
}

impl StreamConfig {
    pub fn new(delay: usize, update_period: usize, perturb: PerturbConfig) -> Result<Self> {
        if update_period == 0 {
            return Err(RtError::config("update period must be positive"));
        }
        Ok(StreamConfig {
            delay,
            update_period,
            perturb,
        })
    }

    /// First boundary allowed to emit: the smallest multiple of `U` at or
    /// above the first actionable index `d + 1`.
    pub fn first_emitting_boundary(&self) -> usize {
        let u = self.update_period;
        (self.delay + 1).div_ceil(u) * u
    }
}

/// Who decides the emission times.
pub enum Policy<'a> {
    /// The behavior-cloned generator, fed causally through its stream state.
    Realtime(&'a GeneratorNet),
    /// Replay a schedule computed offline (the expert's). Starts inside the
    /// zero prefix are unactionable and get dropped, not relocated: replay
    /// has no online decision rule.
    ExpertOracle(EmissionSchedule),
    /// A schedule drawn uniformly at session start, then replayed.
    RandomSchedule { seed: u64 },
    /// Never emits; the degenerate baseline.
    Null,
}

impl Policy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Realtime(_) => "realtime",
            Policy::ExpertOracle(_) => "expert",
            Policy::RandomSchedule { .. } => "random",
            Policy::Null => "null",
        }
    }
}

/// One segment emission: which tuple rank fired, where the segment starts,
/// and at which boundary the decision was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmissionEvent {
    pub rank: usize,
    pub index: usize,
    pub boundary: usize,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub sample_id: u64,
    pub policy: &'static str,
    pub amplitude: f64,
    pub original_class: usize,
    pub original_confidence: f64,
    /// Confidence of the original class on the perturbed stream.
    pub final_confidence: f64,
    pub success: bool,
    /// Per-rank emission positions; `None` = never emitted (dropped).
    pub emitted: Vec<Option<usize>>,
    pub events: Vec<EmissionEvent>,
    /// Segments never emitted.
    pub dropped: usize,
    /// Predicted tuple at every update boundary (realtime policy only).
    pub trace: Vec<Vec<f64>>,
    pub perturbed: Vec<f64>,
    /// Support size of the realized perturbation.
    pub l0: usize,
}

impl AttackOutcome {
    /// Sorted emission positions — the schedule that actually happened.
    pub fn realized_schedule(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.emitted.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn confidence_drop(&self) -> f64 {
        self.original_confidence - self.final_confidence
    }

    /// End-of-episode reward: success indicator minus `lambda` times the
    /// perceptibility metric (support size normalized by stream length).
    /// Components are always reported alongside the combination.
    pub fn reward(&self, lambda: f64) -> Reward {
        let indicator = if self.success { 1.0 } else { 0.0 };
        let metric = self.l0 as f64 / self.perturbed.len() as f64;
        Reward {
            indicator,
            l0: self.l0,
            combined: indicator - lambda * metric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub indicator: f64,
    pub l0: usize,
    pub combined: f64,
}

/// Emission rule for one window `[t, t + U)`: every still-pending rank whose
/// currently predicted start lies at or before the window's last point fires,
/// at the predicted start if it is still ahead, otherwise immediately at `t`
/// (the best-guess moment has passed). Ranks whose relocated segment would
/// run off the stream end stay pending. Pure; the session loop owns the
/// bookkeeping.
pub fn decide_emissions(
    decoded_starts: &[usize],
    t: usize,
    emitted: &[Option<usize>],
    cfg: &StreamConfig,
) -> Vec<(usize, usize)> {
    debug_assert_eq!(t % cfg.update_period, 0, "boundaries are multiples of U");
    debug_assert!(t >= cfg.first_emitting_boundary());
    let mut out = Vec::new();
    for (rank, &start) in decoded_starts.iter().enumerate() {
        if emitted[rank].is_some() {
            continue;
        }
        if start <= t + cfg.update_period - 1 {
            let at = start.max(t);
            if at + cfg.perturb.segment_len <= cfg.perturb.n {
                out.push((rank, at));
            }
        }
    }
    out
}

/// Run one streaming attack session and query the victim once at the end.
pub fn run_attack(
    policy: &Policy,
    blackbox: &BlackBox,
    sample: &TimeSeriesSample,
    cfg: &StreamConfig,
) -> Result<AttackOutcome> {
    let n = cfg.perturb.n;
    if sample.values.len() != n {
        return Err(RtError::config(format!(
            "sample {} has {} points but the stream config says {n}",
            sample.id,
            sample.values.len()
        )));
    }
    if cfg.update_period == 0 {
        return Err(RtError::config("update period must be positive"));
    }
    if let Policy::Realtime(gen) = policy {
        if cfg.delay < cfg.update_period {
            return Err(RtError::config(format!(
                "realtime policy needs delay >= update period ({} < {}): a decision \
                 made at t cannot act before the next boundary",
                cfg.delay, cfg.update_period
            )));
        }
        if gen.config().norm != cfg.perturb.max_start() {
            return Err(RtError::config(format!(
                "generator normalization constant {} does not match the \
                 perturbation's largest start {}",
                gen.config().norm,
                cfg.perturb.max_start()
            )));
        }
        if gen.config().n_segments != cfg.perturb.n_segments {
            return Err(RtError::config(format!(
                "generator emits {} segments, perturbation wants {}",
                gen.config().n_segments,
                cfg.perturb.n_segments
            )));
        }
    }

    let baseline = blackbox.baseline(&sample.values);
    let original_class = argmax(&baseline);
    let original_confidence = baseline[original_class];

    let k = cfg.perturb.n_segments;
    let mut emitted: Vec<Option<usize>> = vec![None; k];
    let mut events: Vec<EmissionEvent> = Vec::new();
    let mut trace: Vec<Vec<f64>> = Vec::new();

    match policy {
        Policy::Null => {}
        Policy::ExpertOracle(schedule) => {
            replay(schedule.starts(), cfg, &mut emitted, &mut events);
        }
        Policy::RandomSchedule { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let starts: Vec<usize> = (0..k)
                .map(|_| rng.gen_range(0..=cfg.perturb.max_start()))
                .collect();
            let schedule = EmissionSchedule::new(starts, &cfg.perturb)
                .expect("draw is in range by construction");
            replay(schedule.starts(), cfg, &mut emitted, &mut events);
        }
        Policy::Realtime(gen) => {
            let u = cfg.update_period;
            let b0 = cfg.first_emitting_boundary();
            let mut state = gen.state();
            let mut observed = 0usize; // points already fed to the encoder
            let mut t = 0usize;
            while t < n {
                // Reveal everything this decision may causally depend on:
                // indices <= t - d - 1, i.e. the first t - d points.
                let avail = t.saturating_sub(cfg.delay);
                if avail > observed {
                    gen.feed(&mut state, &sample.values[observed..avail])?;
                    observed = avail;
                }
                let tuple = gen.readout(&state);
                if t >= b0 {
                    let starts = gen.decode_starts(&tuple);
                    for (rank, at) in decide_emissions(&starts, t, &emitted, cfg) {
                        emitted[rank] = Some(at);
                        events.push(EmissionEvent {
                            rank,
                            index: at,
                            boundary: t,
                        });
                    }
                }
                trace.push(tuple);
                t += u;
            }
        }
    }

    // Realize the committed emissions and hand the stream to the victim.
    let mut r = vec![0.0; n];
    for &at in emitted.iter().flatten() {
        for v in &mut r[at..at + cfg.perturb.segment_len] {
            *v = cfg.perturb.amplitude;
        }
    }
    let perturbed = apply(&sample.values, &r);
    let final_probs = blackbox.query(&perturbed)?;
    let final_class = argmax(&final_probs);
    let dropped = emitted.iter().filter(|e| e.is_none()).count();

    Ok(AttackOutcome {
        sample_id: sample.id,
        policy: policy.name(),
        amplitude: cfg.perturb.amplitude,
        original_class,
        original_confidence,
        final_confidence: final_probs[original_class],
        success: final_class != original_class,
        emitted,
        events,
        dropped,
        trace,
        l0: l0(&r),
        perturbed,
    })
}

/// One attack outcome as persisted to a results file: everything the metric
/// suite needs, without the perturbed waveform itself (reconstructible from
/// the dataset plus the emission record).
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub sample_id: u64,
    /// Policy token; the orchestrator suffixes the source amplitude for
    /// policies derived from demonstrations, e.g. `expert:0.5`.
    pub policy: String,
    /// Emission amplitude.
    pub amplitude: f64,
    pub success: bool,
    pub original_class: usize,
    pub original_confidence: f64,
    pub final_confidence: f64,
    pub emitted: Vec<Option<usize>>,
    pub trace: Vec<Vec<f64>>,
    pub l0: usize,
}

impl OutcomeRecord {
    pub fn from_outcome(o: &AttackOutcome, policy: impl Into<String>) -> Self {
        OutcomeRecord {
            sample_id: o.sample_id,
            policy: policy.into(),
            amplitude: o.amplitude,
            success: o.success,
            original_class: o.original_class,
            original_confidence: o.original_confidence,
            final_confidence: o.final_confidence,
            emitted: o.emitted.clone(),
            trace: o.trace.clone(),
            l0: o.l0,
        }
    }

    pub fn confidence_drop(&self) -> f64 {
        self.original_confidence - self.final_confidence
    }

    pub fn dropped(&self) -> usize {
        self.emitted.iter().filter(|e| e.is_none()).count()
    }

    pub fn realized_schedule(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.emitted.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Line-delimited text encoding: one `key=value` record per line, `#` lines
/// ignored. Floats print in shortest round-trip form, so decode recovers the
/// exact bits.
pub fn encode_outcomes(records: &[OutcomeRecord]) -> String {
    let mut out = String::from("# rtadv outcomes v1\n");
    for r in records {
        let emitted: Vec<String> = r
            .emitted
            .iter()
            .map(|e| match e {
                Some(i) => i.to_string(),
                None => "-".to_string(),
            })
            .collect();
        let trace = if r.trace.is_empty() {
            "-".to_string()
        } else {
            r.trace
                .iter()
                .map(|tuple| {
                    tuple
                        .iter()
                        .map(|v| format!("{v}"))
                        .collect::<Vec<_>>()
                        .join(":")
                })
                .collect::<Vec<_>>()
                .join(";")
        };
        out.push_str(&format!(
            "sample={} policy={} amplitude={} success={} class={} conf={} final={} drop={} l0={} emitted={} trace={}\n",
            r.sample_id,
            r.policy,
            r.amplitude,
            u8::from(r.success),
            r.original_class,
            r.original_confidence,
            r.final_confidence,
            r.confidence_drop(),
            r.l0,
            emitted.join(","),
            trace,
        ));
    }
    out
}

pub fn decode_outcomes(text: &str) -> Result<Vec<OutcomeRecord>> {
    let bad = |line_no: usize, what: &str| {
        RtError::format("outcomes file", format!("line {}: {what}", line_no + 1))
    };
    let mut records = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = std::collections::HashMap::new();
        for part in line.split_whitespace() {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad(ln, &format!("`{part}` is not key=value")))?;
            if fields.insert(k, v).is_some() {
                return Err(bad(ln, &format!("duplicate key {k}")));
            }
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(ln, &format!("missing key {k}")));
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| bad(ln, &format!("bad float in {k}")))
        };
        let emitted: Vec<Option<usize>> = get("emitted")?
            .split(',')
            .map(|tok| {
                if tok == "-" {
                    Ok(None)
                } else {
                    tok.parse().map(Some).map_err(|_| bad(ln, "bad emitted index"))
                }
            })
            .collect::<Result<_>>()?;
        let trace_tok = get("trace")?;
        let trace: Vec<Vec<f64>> = if trace_tok == "-" {
            Vec::new()
        } else {
            trace_tok
                .split(';')
                .map(|tuple| {
                    tuple
                        .split(':')
                        .map(|v| v.parse().map_err(|_| bad(ln, "bad trace value")))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<_>>()?
        };
        records.push(OutcomeRecord {
            sample_id: get("sample")?.parse().map_err(|_| bad(ln, "bad sample id"))?,
            policy: get("policy")?.to_string(),
            amplitude: parse_f("amplitude")?,
            success: match get("success")? {
                "1" => true,
                "0" => false,
                other => return Err(bad(ln, &format!("bad success flag {other}"))),
            },
            original_class: get("class")?.parse().map_err(|_| bad(ln, "bad class"))?,
            original_confidence: parse_f("conf")?,
            final_confidence: parse_f("final")?,
            emitted,
            trace,
            l0: get("l0")?.parse().map_err(|_| bad(ln, "bad l0"))?,
        });
    }
    Ok(records)
}

pub fn save_outcomes(path: &std::path::Path, records: &[OutcomeRecord]) -> Result<()> {
    std::fs::write(path, encode_outcomes(records))?;
    Ok(())
}

pub fn load_outcomes(path: &std::path::Path) -> Result<Vec<OutcomeRecord>> {
    decode_outcomes(&std::fs::read_to_string(path)?)
}

/// Replay a fixed schedule: starts inside the zero prefix (`<= d`) are
/// dropped, the rest emit exactly where the schedule says.
fn replay(
    starts: &[usize],
    cfg: &StreamConfig,
    emitted: &mut [Option<usize>],
    events: &mut Vec<EmissionEvent>,
) {
    for (rank, &s) in starts.iter().enumerate() {
        if s > cfg.delay {
            emitted[rank] = Some(s);
            events.push(EmissionEvent {
                rank,
                index: s,
                boundary: s / cfg.update_period * cfg.update_period,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, DatasetSpec};
    use crate::generator::{GenConfig, GeneratorNet};
    use crate::target::TargetModel;

    fn small_world() -> (crate::dataset::Corpus, TargetModel, PerturbConfig) {
        let mut spec = DatasetSpec::default_spec();
        spec.n = 200;
        for c in &mut spec.classes {
            c.onset = (0, 60);
            c.dur = (100, 140);
        }
        let corpus = synthesize(&spec, 2, 3).unwrap();
        let model = TargetModel::new(4, 20, 5).unwrap();
        let pcfg = PerturbConfig::new(200, 3, 10, 0.5).unwrap();
        (corpus, model, pcfg)
    }

    fn tiny_gen(pcfg: &PerturbConfig) -> GeneratorNet {
        let cfg = GenConfig {
            n_segments: pcfg.n_segments,
            frame_len: 20,
            norm: pcfg.max_start(),
            lstm_depth: 1,
            lstm_hidden: 8,
        };
        GeneratorNet::new(cfg, 17).unwrap()
    }

    #[test]
    fn first_emitting_boundary_rounds_up() {
        let pcfg = PerturbConfig::new(200, 2, 5, 0.5).unwrap();
        let cfg = StreamConfig::new(10, 20, pcfg).unwrap();
        assert_eq!(cfg.first_emitting_boundary(), 20);
        let cfg = StreamConfig::new(20, 20, cfg.perturb).unwrap();
        assert_eq!(cfg.first_emitting_boundary(), 40);
        let cfg = StreamConfig::new(0, 1, cfg.perturb).unwrap();
        assert_eq!(cfg.first_emitting_boundary(), 1);
    }

    #[test]
    fn zero_prefix_holds_for_every_policy() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let d = 20;
        let cfg = StreamConfig::new(d, 20, pcfg).unwrap();
        let gen = tiny_gen(&cfg.perturb);
        let sample = &corpus.samples[0];
        let oracle_sched =
            EmissionSchedule::new(vec![5, 60, 110], &cfg.perturb).unwrap();
        for policy in [
            Policy::Realtime(&gen),
            Policy::ExpertOracle(oracle_sched),
            Policy::RandomSchedule { seed: 99 },
            Policy::Null,
        ] {
            let out = run_attack(&policy, &bb, sample, &cfg).unwrap();
            for i in 0..=d {
                assert_eq!(
                    out.perturbed[i], sample.values[i],
                    "{}: r[{i}] != 0 inside the zero prefix",
                    out.policy
                );
            }
        }
    }

    #[test]
    fn oracle_replays_actionable_starts_and_drops_early_ones() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let cfg = StreamConfig::new(10, 20, pcfg).unwrap();
        let sample = &corpus.samples[1];
        let schedule = EmissionSchedule::new(vec![5, 60, 110], &cfg.perturb).unwrap();
        let out = run_attack(&Policy::ExpertOracle(schedule), &bb, sample, &cfg).unwrap();
        assert_eq!(out.emitted, vec![None, Some(60), Some(110)]);
        assert_eq!(out.dropped, 1);
        assert_eq!(out.realized_schedule(), vec![60, 110]);
        // Exactly the realized part of the schedule, nowhere else.
        let sched = EmissionSchedule::new(vec![60, 110], &cfg.perturb).unwrap();
        let direct = apply(&sample.values, &crate::perturb::realize(&sched, &cfg.perturb));
        assert_eq!(out.perturbed, direct);
    }

    #[test]
    fn decide_emissions_matches_worked_examples() {
        // Window [200, 210): passed start emits now, in-window start emits on
        // time, far-future start stays pending.
        let pcfg = PerturbConfig::new(1000, 3, 10, 0.5).unwrap();
        let cfg = StreamConfig::new(10, 10, pcfg).unwrap();
        let none = [None, None, None];
        assert_eq!(decide_emissions(&[140, 205, 500], 200, &none, &cfg), vec![(0, 200), (1, 205)]);
        // Already-emitted ranks never fire twice.
        let some = [Some(140), None, None];
        assert_eq!(decide_emissions(&[140, 205, 500], 200, &some, &cfg), vec![(1, 205)]);
        // A relocated segment that cannot fit before the stream ends stays
        // pending (and will be dropped).
        let cfg_end = StreamConfig::new(10, 10, PerturbConfig::new(205, 1, 10, 0.5).unwrap()).unwrap();
        assert_eq!(decide_emissions(&[190], 200, &[None], &cfg_end), vec![]);
    }

    #[test]
    fn null_policy_changes_nothing() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let cfg = StreamConfig::new(20, 20, pcfg).unwrap();
        let out = run_attack(&Policy::Null, &bb, &corpus.samples[2], &cfg).unwrap();
        assert!(!out.success);
        assert_eq!(out.confidence_drop(), 0.0);
        assert_eq!(out.l0, 0);
        assert_eq!(out.dropped, cfg.perturb.n_segments);
        assert_eq!(out.reward(1.0), Reward { indicator: 0.0, l0: 0, combined: 0.0 });
    }

    #[test]
    fn realtime_rejects_delay_shorter_than_update_period() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let gen = tiny_gen(&pcfg);
        let cfg = StreamConfig::new(10, 20, pcfg).unwrap();
        let err = run_attack(&Policy::Realtime(&gen), &bb, &corpus.samples[0], &cfg).unwrap_err();
        assert!(matches!(err, RtError::Config(_)), "got {err:?}");
    }

    #[test]
    fn realtime_emissions_depend_only_on_observed_prefix() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let d = 40;
        let cfg = StreamConfig::new(d, 20, pcfg).unwrap();
        let gen = tiny_gen(&cfg.perturb);
        let sample = &corpus.samples[3];
        let out = run_attack(&Policy::Realtime(&gen), &bb, sample, &cfg).unwrap();

        // The last d points are never observed; mutating them must leave
        // every decision (emissions, trace) unchanged.
        let mut mutated = sample.clone();
        let n = mutated.values.len();
        for v in &mut mutated.values[n - d..] {
            *v = (-*v * 0.5 + 0.3).clamp(-1.0, 1.0);
        }
        let out2 = run_attack(&Policy::Realtime(&gen), &bb, &mutated, &cfg).unwrap();
        assert_eq!(out.emitted, out2.emitted);
        assert_eq!(out.events, out2.events);
        assert_eq!(out.trace, out2.trace);
    }

    #[test]
    fn emissions_never_precede_their_boundary_or_repeat() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let cfg = StreamConfig::new(20, 20, pcfg).unwrap();
        let gen = tiny_gen(&cfg.perturb);
        for sample in &corpus.samples {
            let out = run_attack(&Policy::Realtime(&gen), &bb, sample, &cfg).unwrap();
            let mut seen = vec![false; cfg.perturb.n_segments];
            for ev in &out.events {
                assert!(ev.index >= ev.boundary, "emission edited the past: {ev:?}");
                assert!(ev.index > cfg.delay, "emission inside the zero prefix: {ev:?}");
                assert!(!seen[ev.rank], "rank {} emitted twice", ev.rank);
                seen[ev.rank] = true;
            }
            assert!(out.perturbed.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn reward_arithmetic_matches_definition() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let cfg = StreamConfig::new(10, 20, pcfg).unwrap();
        let schedule = EmissionSchedule::new(vec![60, 100, 140], &cfg.perturb).unwrap();
        let out = run_attack(&Policy::ExpertOracle(schedule), &bb, &corpus.samples[4], &cfg).unwrap();
        assert_eq!(out.l0, 30, "three disjoint segments of 10");
        let r = out.reward(1.0);
        let expect = r.indicator - 30.0 / 200.0;
        assert!((r.combined - expect).abs() < 1e-15);
        assert_eq!(out.reward(0.0).combined, r.indicator);
    }

    #[test]
    fn outcome_records_round_trip_through_text() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let cfg = StreamConfig::new(20, 20, pcfg).unwrap();
        let gen = tiny_gen(&cfg.perturb);
        let schedule = EmissionSchedule::new(vec![5, 60, 110], &cfg.perturb).unwrap();
        let mut records = Vec::new();
        for (i, policy) in [
            Policy::Realtime(&gen),
            Policy::ExpertOracle(schedule),
            Policy::RandomSchedule { seed: 5 },
            Policy::Null,
        ]
        .iter()
        .enumerate()
        {
            let out = run_attack(policy, &bb, &corpus.samples[i], &cfg).unwrap();
            records.push(OutcomeRecord::from_outcome(&out, format!("{}:0.5", out.policy)));
        }
        let text = encode_outcomes(&records);
        let back = decode_outcomes(&text).unwrap();
        assert_eq!(back, records);
        assert_eq!(encode_outcomes(&back), text, "re-encoding is stable");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("outcomes.txt");
        save_outcomes(&path, &records).unwrap();
        assert_eq!(load_outcomes(&path).unwrap(), records);
    }

    #[test]
    fn outcome_decode_rejects_malformed_lines() {
        assert!(decode_outcomes("sample=1 policy=null").is_err(), "missing keys");
        assert!(decode_outcomes("garbage line").is_err());
        let ok = "# comment\n\n";
        assert_eq!(decode_outcomes(ok).unwrap(), vec![]);
    }

    #[test]
    fn final_query_is_metered_exactly_once() {
        let (corpus, model, pcfg) = small_world();
        let bb = BlackBox::new(&model, None);
        let cfg = StreamConfig::new(20, 20, pcfg).unwrap();
        let gen = tiny_gen(&cfg.perturb);
        run_attack(&Policy::Realtime(&gen), &bb, &corpus.samples[0], &cfg).unwrap();
        assert_eq!(bb.queries_used(), 1);
        run_attack(&Policy::Null, &bb, &corpus.samples[1], &cfg).unwrap();
        assert_eq!(bb.queries_used(), 2);
    }
}
