//! The real-time perturbation generator: a causal encoder/decoder network
//! trained by behavior cloning on expert demonstrations.
//!
//! The encoder frames the observed stream, extracts per-frame features with a
//! conv/pool trunk, and folds them through a stacked-LSTM state; the decoder
//! is a dense stack reading only that state, so the prediction at frame `t`
//! depends on nothing after `t` — causality holds by construction. The
//! network regresses the expert's emission schedule as a tuple of normalized
//! start times, one prediction per frame; with zero frames consumed it emits
//! an input-independent prior.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Corpus;
use crate::error::{Result, RtError};
use crate::expert::DemoSet;
use crate::numcore::io;
use crate::numcore::{Activation, Adam, LayerSpec, NdArray, Network, StreamState};
use crate::seeds;

/// Shape parameters of a generator network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    /// Output tuple width (number of noise segments the attack may place).
    pub n_segments: usize,
    /// Points per frame; must be >= 16 (four pooling stages).
    pub frame_len: usize,
    /// Start times normalize by this constant (the largest valid start,
    /// stream length minus segment length).
    pub norm: usize,
    /// Stacked recurrent layers in the encoder.
    pub lstm_depth: usize,
    /// Hidden width of each recurrent layer.
    pub lstm_hidden: usize,
}

impl GenConfig {
    pub fn new(n_segments: usize, frame_len: usize, norm: usize) -> Self {
        GenConfig {
            n_segments,
            frame_len,
            norm,
            lstm_depth: 2,
            lstm_hidden: 64,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(RtError::config("generator needs n_segments >= 1"));
        }
        if self.frame_len < 16 {
            return Err(RtError::config(format!(
                "frame_len must be >= 16 for the four pool stages, got {}",
                self.frame_len
            )));
        }
        if self.norm == 0 {
            return Err(RtError::config("normalization constant must be positive"));
        }
        if self.lstm_depth == 0 || self.lstm_hidden == 0 {
            return Err(RtError::config("generator needs at least one recurrent layer"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorNet {
    net: Network,
    cfg: GenConfig,
    /// Expert amplitude of the demonstration set this net was cloned from.
    trained_amplitude: Option<f64>,
}

/// Incremental observation state: the encoder's recurrent hidden states plus
/// the count of consumed frames. Cloneable, so one observed prefix can be
/// continued down different futures.
#[derive(Debug, Clone)]
pub struct EncoderState {
    inner: StreamState,
}

impl EncoderState {
    pub fn frames_consumed(&self) -> usize {
        self.inner.frames_consumed()
    }
}

#[derive(Debug, Clone)]
pub struct GenHyper {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for GenHyper {
    fn default() -> Self {
        GenHyper { epochs: 10, lr: 1e-3 }
    }
}

impl GeneratorNet {
    /// Encoder: framing -> four conv(k=3)+pool(2) stages widening
    /// 1->8->16->24->32 channels -> stacked LSTMs. Decoder: dense 64 (tanh),
    /// dense 32 (tanh), linear head one output per segment. The head is
    /// unsquashed; clamping into the valid start range happens at decode.
    pub fn new(cfg: GenConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let channels = [8usize, 16, 24, 32];
        let mut specs = vec![LayerSpec::Framing { frame_len: cfg.frame_len }];
        let mut width = cfg.frame_len;
        let mut in_ch = 1usize;
        for &out_ch in &channels {
            specs.push(LayerSpec::Conv1d {
                in_channels: in_ch,
                out_channels: out_ch,
                kernel: 3,
                activation: Activation::Relu,
            });
            specs.push(LayerSpec::MaxPool1d { width: 2 });
            width /= 2;
            in_ch = out_ch;
        }
        let mut feat = in_ch * width;
        for _ in 0..cfg.lstm_depth {
            specs.push(LayerSpec::Recurrent {
                input_dim: feat,
                hidden: cfg.lstm_hidden,
            });
            feat = cfg.lstm_hidden;
        }
        specs.push(LayerSpec::Dense {
            input_dim: feat,
            output_dim: 64,
            activation: Activation::Tanh,
        });
        specs.push(LayerSpec::Dense {
            input_dim: 64,
            output_dim: 32,
            activation: Activation::Tanh,
        });
        specs.push(LayerSpec::Dense {
            input_dim: 32,
            output_dim: cfg.n_segments,
            activation: Activation::Linear,
        });
        Ok(GeneratorNet {
            net: Network::new(specs, seed)?,
            cfg,
            trained_amplitude: None,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn trained_amplitude(&self) -> Option<f64> {
        self.trained_amplitude
    }

    /// Fresh observation state (nothing consumed yet).
    pub fn state(&self) -> EncoderState {
        EncoderState {
            inner: self.net.stream_init().expect("generator stacks are streamable"),
        }
    }

    /// Readout for the current state: the predicted tuple of normalized start
    /// times. Valid at any time, including before the first frame.
    pub fn readout(&self, state: &EncoderState) -> Vec<f64> {
        self.net.stream_output(&state.inner).expect("validated stack")
    }

    /// Consume any number of newly observed points. Complete frames update
    /// the recurrent state immediately; a partial tail is buffered until the
    /// rest of its frame arrives.
    pub fn feed(&self, state: &mut EncoderState, points: &[f64]) -> Result<()> {
        self.net.stream_push(&mut state.inner, points).map(|_| ())
    }

    /// Consume exactly one frame and return the updated prediction.
    pub fn step(&self, state: &mut EncoderState, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() != self.cfg.frame_len {
            return Err(RtError::shape(format!(
                "step wants exactly one frame of {} points, got {}",
                self.cfg.frame_len,
                frame.len()
            )));
        }
        self.net.stream_push(&mut state.inner, frame)?;
        Ok(self.readout(state))
    }

    /// Prediction from an observation prefix. Only complete frames influence
    /// the output; a partial tail frame is unobserved by definition. With
    /// `prefix.len() < frame_len` this is the input-independent prior.
    pub fn predict_full(&self, prefix: &[f64]) -> Vec<f64> {
        let mut state = self.state();
        let whole = prefix.len() - prefix.len() % self.cfg.frame_len;
        self.net
            .stream_push(&mut state.inner, &prefix[..whole])
            .expect("validated stack");
        self.readout(&state)
    }

    /// Decode a predicted tuple into segment start indices: scale by the
    /// normalization constant, round, clamp into the valid range, sort.
    pub fn decode_starts(&self, tuple: &[f64]) -> Vec<usize> {
        let hi = self.cfg.norm as f64;
        let mut starts: Vec<usize> = tuple
            .iter()
            .map(|&y| (y * hi).round().clamp(0.0, hi) as usize)
            .collect();
        starts.sort_unstable();
        starts
    }

    /// Mean-over-frames, mean-over-components squared error of the per-frame
    /// prediction against one constant target tuple, plus parameter
    /// gradients. This is the behavior-cloning loss of a single trajectory.
    pub fn bc_loss_and_grads(
        &self,
        values: &[f64],
        target: &[f64],
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let s = self.cfg.n_segments;
        if target.len() != s {
            return Err(RtError::shape(format!(
                "target tuple has {} components, expected {s}",
                target.len()
            )));
        }
        let input = NdArray::from_vec(vec![values.len()], values.to_vec())?;
        let (out, cache) = self.net.forward(&input)?;
        let t = out.shape()[0];
        let scale = 1.0 / (t * s) as f64;
        let mut loss = 0.0;
        let mut gout = NdArray::zeros(out.shape());
        for ti in 0..t {
            let row = out.row(ti);
            let grow = gout.row_mut(ti);
            for (k, (&y, &e)) in row.iter().zip(target).enumerate() {
                let diff = y - e;
                loss += diff * diff * scale;
                grow[k] = 2.0 * diff * scale;
            }
        }
        let (grads, _) = self.net.backward(&cache, &gout)?;
        Ok((loss, grads))
    }

    /// Behavior cloning (demonstrations -> parameters). One optimizer step
    /// per trajectory; each epoch visits trajectories in a seeded random
    /// order, so the result depends on the seed but not on the order the
    /// demonstrations were generated or stored in. Returns the per-epoch
    /// mean loss curve.
    pub fn train_behavior_cloning(
        &mut self,
        demos: &DemoSet,
        corpus: &Corpus,
        hyper: &GenHyper,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if demos.perturb.n_segments != self.cfg.n_segments {
            return Err(RtError::config(format!(
                "demo set has {} segments, generator expects {}",
                demos.perturb.n_segments, self.cfg.n_segments
            )));
        }
        if demos.perturb.max_start() != self.cfg.norm {
            return Err(RtError::config(format!(
                "demo max start {} differs from the generator's normalization constant {}",
                demos.perturb.max_start(),
                self.cfg.norm
            )));
        }
        // (sample id, values, normalized expert tuple), sorted by sample id
        // so training is invariant to demo generation/storage order.
        let mut items: Vec<(u64, &[f64], Vec<f64>)> = Vec::new();
        for traj in demos.usable() {
            let sample = corpus.by_id(traj.sample_id).ok_or_else(|| {
                RtError::config(format!("demo references unknown sample id {}", traj.sample_id))
            })?;
            if traj.starts.len() != self.cfg.n_segments {
                return Err(RtError::config(format!(
                    "demo for sample {} has {} starts, expected {}",
                    traj.sample_id,
                    traj.starts.len(),
                    self.cfg.n_segments
                )));
            }
            let tuple: Vec<f64> = traj
                .starts
                .iter()
                .map(|&st| st as f64 / self.cfg.norm as f64)
                .collect();
            items.push((traj.sample_id, &sample.values, tuple));
        }
        if items.is_empty() {
            return Err(RtError::config("no usable demonstrations to clone from"));
        }
        items.sort_by_key(|(id, _, _)| *id);

        let mut adam = Adam::new(hyper.lr, &self.net.block_sizes());
        let mut curve = Vec::with_capacity(hyper.epochs);
        let mut order: Vec<usize> = (0..items.len()).collect();
        for epoch in 0..hyper.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::item_seed(seed, epoch as u64));
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for &i in &order {
                let (_, values, tuple) = &items[i];
                let (loss, grads) = self.bc_loss_and_grads(values, tuple)?;
                if !loss.is_finite() {
                    return Err(RtError::NonFinite(format!(
                        "cloning loss diverged on trajectory {i} (epoch {epoch})"
                    )));
                }
                epoch_loss += loss;
                adam.update(self.net.param_blocks_mut(), &grads);
            }
            curve.push(epoch_loss / order.len() as f64);
        }
        self.trained_amplitude = Some(demos.perturb.amplitude);
        Ok(curve)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut meta = vec![
            ("kind".to_string(), "generator".to_string()),
            ("n_segments".to_string(), self.cfg.n_segments.to_string()),
            ("frame_len".to_string(), self.cfg.frame_len.to_string()),
            ("norm".to_string(), self.cfg.norm.to_string()),
            ("lstm_depth".to_string(), self.cfg.lstm_depth.to_string()),
            ("lstm_hidden".to_string(), self.cfg.lstm_hidden.to_string()),
        ];
        if let Some(a) = self.trained_amplitude {
            meta.push(("trained_amplitude".to_string(), format!("{a}")));
        }
        io::save_network(path, &self.net, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, meta) = io::load_network(path)?;
        let get = |key: &str| -> Result<&str> {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| RtError::format("RTADV-NN file", format!("missing metadata key {key}")))
        };
        if get("kind")? != "generator" {
            return Err(RtError::format(
                "RTADV-NN file",
                format!("expected kind=generator, got {}", get("kind")?),
            ));
        }
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| RtError::format("RTADV-NN file", format!("bad {key} metadata")))
        };
        let cfg = GenConfig {
            n_segments: num("n_segments")?,
            frame_len: num("frame_len")?,
            norm: num("norm")?,
            lstm_depth: num("lstm_depth")?,
            lstm_hidden: num("lstm_hidden")?,
        };
        let trained_amplitude = match meta.iter().find(|(k, _)| k == "trained_amplitude") {
            Some((_, v)) => Some(v.parse::<f64>().map_err(|_| {
                RtError::format("RTADV-NN file", "bad trained_amplitude metadata")
            })?),
            None => None,
        };
        Ok(GeneratorNet {
            net,
            cfg,
            trained_amplitude,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{DemoSet, Trajectory};
    use crate::numcore::check_gradients;
    use crate::perturb::PerturbConfig;
    use crate::dataset::{synthesize, DatasetSpec, TimeSeriesSample};

    fn tiny_cfg() -> GenConfig {
        GenConfig {
            n_segments: 2,
            frame_len: 16,
            norm: 90,
            lstm_depth: 1,
            lstm_hidden: 5,
        }
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 29 % 50) as f64 - 25.0) / 30.0).collect()
    }

    #[test]
    fn prior_is_input_independent() {
        let gen = GeneratorNet::new(tiny_cfg(), 3).unwrap();
        let a = gen.predict_full(&[]);
        let b = gen.predict_full(&ramp(10)); // less than one frame
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn step_matches_predict_full_bitwise() {
        let gen = GeneratorNet::new(tiny_cfg(), 7).unwrap();
        let series = ramp(96); // 6 frames
        let mut state = gen.state();
        for (k, frame) in series.chunks(16).enumerate() {
            let stepped = gen.step(&mut state, frame).unwrap();
            let full = gen.predict_full(&series[..(k + 1) * 16]);
            assert_eq!(stepped, full, "frame {k}");
        }
        assert_eq!(state.frames_consumed(), 6);
    }

    #[test]
    fn partial_tail_frame_is_unobserved() {
        let gen = GeneratorNet::new(tiny_cfg(), 7).unwrap();
        let series = ramp(96);
        // 40 points = 2 complete frames + 8 buffered points.
        assert_eq!(gen.predict_full(&series[..40]), gen.predict_full(&series[..32]));
    }

    #[test]
    fn causality_unseen_suffix_cannot_matter() {
        let gen = GeneratorNet::new(tiny_cfg(), 11).unwrap();
        let series = ramp(96);
        let mut mutated = series.clone();
        for v in &mut mutated[48..] {
            *v = -*v + 0.25;
        }
        for t in [0usize, 16, 32, 48] {
            assert_eq!(
                gen.predict_full(&series[..t]),
                gen.predict_full(&mutated[..t]),
                "prefix {t} saw the future"
            );
        }
        assert_ne!(gen.predict_full(&series[..96]), gen.predict_full(&mutated[..96]));
    }

    #[test]
    fn shared_prefix_state_supports_divergent_continuations() {
        let gen = GeneratorNet::new(tiny_cfg(), 13).unwrap();
        let series = ramp(64);
        let mut state = gen.state();
        gen.step(&mut state, &series[0..16]).unwrap();
        gen.step(&mut state, &series[16..32]).unwrap();

        let mut fork_a = state.clone();
        let mut fork_b = state.clone();
        let cont_a: Vec<f64> = series[32..48].to_vec();
        let cont_b: Vec<f64> = series[32..48].iter().map(|v| -v).collect();
        let out_a = gen.step(&mut fork_a, &cont_a).unwrap();
        let out_b = gen.step(&mut fork_b, &cont_b).unwrap();

        let mut full_a = series[..48].to_vec();
        let mut full_b = series[..32].to_vec();
        full_b.extend_from_slice(&cont_b);
        assert_eq!(out_a, gen.predict_full(&full_a));
        assert_eq!(out_b, gen.predict_full(&full_b));
        full_a.truncate(32);
        full_b.truncate(32);
        assert_eq!(full_a, full_b, "test invariant: shared prefix");
    }

    #[test]
    fn step_rejects_wrong_frame_sizes() {
        let gen = GeneratorNet::new(tiny_cfg(), 1).unwrap();
        let mut state = gen.state();
        assert!(gen.step(&mut state, &[]).is_err(), "zero-length step accepted");
        assert!(gen.step(&mut state, &ramp(15)).is_err());
        assert!(gen.step(&mut state, &ramp(17)).is_err());
        assert_eq!(state.frames_consumed(), 0, "failed steps must not advance");
    }

    #[test]
    fn decode_scales_rounds_clamps_sorts() {
        let gen = GeneratorNet::new(tiny_cfg(), 1).unwrap();
        // norm = 90: 0.5 -> 45, -0.2 -> clamp 0, 1.7 -> clamp 90; sorted.
        assert_eq!(gen.decode_starts(&[0.5, -0.2]), vec![0, 45]);
        assert_eq!(gen.decode_starts(&[1.7, 0.494]), vec![44, 90]);
    }

    #[test]
    fn bc_gradients_match_finite_differences() {
        let gen = GeneratorNet::new(tiny_cfg(), 21).unwrap();
        let series = ramp(48); // 3 frames through conv, pool, lstm, dense
        let target = vec![0.3, 0.7];
        let (loss, grads) = gen.bc_loss_and_grads(&series, &target).unwrap();
        assert!(loss > 0.0);
        let mut probe = gen.network().clone();
        let input = NdArray::from_vec(vec![48], series.clone()).unwrap();
        let report = check_gradients(
            &mut probe,
            |net| {
                let (out, _) = net.forward(&input).unwrap();
                let t = out.shape()[0];
                let mut l = 0.0;
                for ti in 0..t {
                    for (y, e) in out.row(ti).iter().zip(&target) {
                        l += (y - e) * (y - e);
                    }
                }
                l / (t * target.len()) as f64
            },
            &grads,
            1e-6,
        );
        assert!(
            report.max_rel_err < 1e-5,
            "worst {:?} err {}",
            report.worst,
            report.max_rel_err
        );
    }

    #[test]
    fn two_frame_loss_matches_hand_computation() {
        let gen = GeneratorNet::new(tiny_cfg(), 5).unwrap();
        let series = ramp(32); // exactly two frames
        let target = [0.25, 0.5];
        let (loss, _) = gen.bc_loss_and_grads(&series, &target).unwrap();
        let y0 = gen.predict_full(&series[..16]);
        let y1 = gen.predict_full(&series);
        let per_frame = |y: &[f64]| {
            y.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0
        };
        let expect = (per_frame(&y0) + per_frame(&y1)) / 2.0;
        assert!((loss - expect).abs() < 1e-12, "{loss} vs {expect}");
    }

    fn constant_demo_corpus() -> (Corpus, DemoSet) {
        let mut spec = DatasetSpec::default_spec();
        spec.n = 100;
        for c in &mut spec.classes {
            c.onset = (0, 30);
            c.dur = (50, 70);
        }
        let corpus = synthesize(&spec, 10, 42).unwrap();
        let pcfg = PerturbConfig::new(100, 2, 5, 0.5).unwrap();
        let trajectories: Vec<Trajectory> = corpus
            .samples
            .iter()
            .map(|s: &TimeSeriesSample| Trajectory {
                sample_id: s.id,
                starts: vec![19, 57],
                original_class: s.label,
                original_confidence: 0.9,
                final_confidence: 0.2,
                truncated: false,
            })
            .collect();
        (
            corpus,
            DemoSet {
                perturb: pcfg,
                de: crate::expert::DeConfig::default(),
                trajectories,
            },
        )
    }

    #[test]
    fn cloning_a_constant_expert_converges() {
        let (corpus, demos) = constant_demo_corpus();
        let cfg = GenConfig {
            n_segments: 2,
            frame_len: 20,
            norm: demos.perturb.max_start(),
            lstm_depth: 1,
            lstm_hidden: 16,
        };
        let mut gen = GeneratorNet::new(cfg, 9).unwrap();
        let hyper = GenHyper { epochs: 60, lr: 1e-2 };
        let curve = gen.train_behavior_cloning(&demos, &corpus, &hyper, 31).unwrap();
        assert!(curve.last().unwrap() < &curve[0], "loss did not decrease: {curve:?}");

        // The expert is constant, so every prediction should approach the
        // normalized tuple (19/95, 57/95) at every frame of every sample.
        let expect = [19.0 / 95.0, 57.0 / 95.0];
        let mut mae = 0.0;
        let mut count = 0;
        for s in &corpus.samples {
            for t in [20usize, 60, 100] {
                let y = gen.predict_full(&s.values[..t]);
                for (a, b) in y.iter().zip(&expect) {
                    mae += (a - b).abs();
                    count += 1;
                }
            }
        }
        mae /= count as f64;
        assert!(mae < 0.02, "val MAE {mae} too high");
        assert_eq!(gen.trained_amplitude(), Some(0.5));
    }

    #[test]
    fn training_is_deterministic_and_order_invariant() {
        let (corpus, mut demos) = constant_demo_corpus();
        let cfg = GenConfig {
            n_segments: 2,
            frame_len: 20,
            norm: demos.perturb.max_start(),
            lstm_depth: 1,
            lstm_hidden: 8,
        };
        let hyper = GenHyper { epochs: 2, lr: 1e-3 };
        let mut a = GeneratorNet::new(cfg, 4).unwrap();
        a.train_behavior_cloning(&demos, &corpus, &hyper, 77).unwrap();

        demos.trajectories.reverse();
        let mut b = GeneratorNet::new(cfg, 4).unwrap();
        b.train_behavior_cloning(&demos, &corpus, &hyper, 77).unwrap();
        assert_eq!(a.network().param_blocks(), b.network().param_blocks());

        let mut c = GeneratorNet::new(cfg, 4).unwrap();
        c.train_behavior_cloning(&demos, &corpus, &hyper, 78).unwrap();
        assert_ne!(a.network().param_blocks(), c.network().param_blocks());
    }

    #[test]
    fn empty_demo_set_is_rejected() {
        let (corpus, mut demos) = constant_demo_corpus();
        demos.trajectories.clear();
        let cfg = GenConfig {
            n_segments: 2,
            frame_len: 20,
            norm: demos.perturb.max_start(),
            lstm_depth: 1,
            lstm_hidden: 8,
        };
        let mut gen = GeneratorNet::new(cfg, 4).unwrap();
        let err = gen
            .train_behavior_cloning(&demos, &corpus, &GenHyper::default(), 1)
            .unwrap_err();
        assert!(matches!(err, RtError::Config(_)), "got {err:?}");
    }

    #[test]
    fn generator_round_trips_through_disk() {
        let (corpus, demos) = constant_demo_corpus();
        let cfg = GenConfig {
            n_segments: 2,
            frame_len: 20,
            norm: demos.perturb.max_start(),
            lstm_depth: 2,
            lstm_hidden: 8,
        };
        let mut gen = GeneratorNet::new(cfg, 2).unwrap();
        gen.train_behavior_cloning(&demos, &corpus, &GenHyper { epochs: 1, lr: 1e-3 }, 5)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.nn");
        gen.save(&path).unwrap();
        let back = GeneratorNet::load(&path).unwrap();
        assert_eq!(back.config(), gen.config());
        assert_eq!(back.trained_amplitude(), gen.trained_amplitude());
        assert_eq!(back.network().param_blocks(), gen.network().param_blocks());
        let probe = ramp(100);
        assert_eq!(back.predict_full(&probe), gen.predict_full(&probe));
    }
}
