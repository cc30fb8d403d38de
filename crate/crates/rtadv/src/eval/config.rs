//! Experiment configuration: a plain-text `key = value` format covering the
//! whole pipeline, with defaults matching the standard desk-scale run.
//!
//! `parse_config(render_config(c)) == c` for every valid config, and the
//! rendered form is canonical (stable key order, shortest-round-trip floats),
//! so the snapshot a run directory stores is byte-reproducible.

use crate::dataset::DatasetSpec;
use crate::error::{Result, RtError};
use crate::expert::DeConfig;
use crate::generator::GenHyper;
use crate::perturb::PerturbConfig;
use crate::target::TrainHyper;

/// Which split an attack evaluation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    /// In the classifier's training pool, unseen by the attack model.
    Test1,
    /// Held out from both the classifier and the attack model.
    Test2,
    /// The attack model's validation slice.
    AttackVal,
}

impl EvalSet {
    pub fn token(self) -> &'static str {
        match self {
            EvalSet::Test1 => "test1",
            EvalSet::Test2 => "test2",
            EvalSet::AttackVal => "attack_val",
        }
    }

    pub fn parse(tok: &str) -> Result<Self> {
        match tok {
            "test1" => Ok(EvalSet::Test1),
            "test2" => Ok(EvalSet::Test2),
            "attack_val" => Ok(EvalSet::AttackVal),
            other => Err(RtError::config(format!(
                "unknown eval set `{other}` (expected test1, test2 or attack_val)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Root of every stage seed.
    pub master_seed: u64,
    /// Corpus samples per class.
    pub per_class: usize,
    /// Points per sample.
    pub stream_len: usize,
    /// Frame length shared by the target and the generator.
    pub frame_len: usize,
    /// Noise segments per attack.
    pub n_segments: usize,
    /// Points per noise segment.
    pub segment_len: usize,
    /// Expert amplitudes demonstrations are generated at (one generator
    /// variant is trained per entry).
    pub demo_amplitudes: Vec<f64>,
    /// Emission amplitudes the sweep evaluates every policy at.
    pub sweep_amplitudes: Vec<f64>,
    /// Headline emission amplitude for the `attack` stage and the report.
    pub attack_amplitude: f64,
    /// Processing delay d in points.
    pub delay: usize,
    /// Decision cadence U in points.
    pub update_period: usize,
    pub target_epochs: usize,
    pub target_batch: usize,
    pub target_lr: f64,
    pub de_population: usize,
    pub de_iterations: usize,
    pub de_diff_weight: f64,
    pub de_crossover: f64,
    pub gen_epochs: usize,
    pub gen_lr: f64,
    /// Perceptibility weight in the reward; 0 reports pure success.
    pub lambda: f64,
    /// Split the `attack` stage evaluates on.
    pub eval_set: EvalSet,
    /// Samples per cell in the expert variance analysis.
    pub variance_samples: usize,
    /// Seeded repeats per sample per cell.
    pub variance_seeds: usize,
    pub variance_populations: Vec<usize>,
    pub variance_iterations: Vec<usize>,
    /// Worker threads for per-sample fan-out; 0 = number of CPUs.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            master_seed: 7,
            per_class: 250,
            stream_len: 1000,
            frame_len: 20,
            n_segments: 5,
            segment_len: 10,
            demo_amplitudes: vec![0.1, 0.5],
            sweep_amplitudes: vec![0.1, 0.3, 0.5, 1.0],
            attack_amplitude: 0.5,
            delay: 20,
            update_period: 20,
            target_epochs: 12,
            target_batch: 16,
            target_lr: 1e-3,
            de_population: 10,
            de_iterations: 75,
            de_diff_weight: 0.5,
            de_crossover: 0.9,
            gen_epochs: 10,
            gen_lr: 1e-3,
            lambda: 0.0,
            eval_set: EvalSet::Test1,
            variance_samples: 8,
            variance_seeds: 3,
            variance_populations: vec![6, 10],
            variance_iterations: vec![25, 75],
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let amp_ok = |a: f64| a > 0.0 && a <= 1.0;
        for &a in self.demo_amplitudes.iter().chain(&self.sweep_amplitudes) {
            if !amp_ok(a) {
                return Err(RtError::config(format!("amplitude {a} outside (0, 1]")));
            }
        }
        if !amp_ok(self.attack_amplitude) {
            return Err(RtError::config(format!(
                "attack_amplitude {} outside (0, 1]",
                self.attack_amplitude
            )));
        }
        if self.demo_amplitudes.is_empty() {
            return Err(RtError::config("demo_amplitudes must not be empty"));
        }
        if self.sweep_amplitudes.is_empty() {
            return Err(RtError::config("sweep_amplitudes must not be empty"));
        }
        if !self
            .sweep_amplitudes
            .iter()
            .any(|&a| a == self.attack_amplitude)
        {
            return Err(RtError::config(format!(
                "attack_amplitude {} must appear in sweep_amplitudes (the report \
                 reads its headline numbers from the sweep outcomes)",
                self.attack_amplitude
            )));
        }
        if !self
            .demo_amplitudes
            .iter()
            .any(|&a| a == self.attack_amplitude)
        {
            return Err(RtError::config(format!(
                "attack_amplitude {} must appear in demo_amplitudes (the headline \
                 expert and generator are the matching variants)",
                self.attack_amplitude
            )));
        }
        for w in self.demo_amplitudes.windows(2) {
            if w[1] <= w[0] {
                return Err(RtError::config("demo_amplitudes must be strictly increasing"));
            }
        }
        for w in self.sweep_amplitudes.windows(2) {
            if w[1] <= w[0] {
                return Err(RtError::config("sweep_amplitudes must be strictly increasing"));
            }
        }
        if self.update_period == 0 {
            return Err(RtError::config("update_period must be positive"));
        }
        if self.delay < self.update_period {
            return Err(RtError::config(format!(
                "delay {} must be >= update_period {} (the realtime policy requires it)",
                self.delay, self.update_period
            )));
        }
        if self.per_class == 0 {
            return Err(RtError::config("per_class must be positive"));
        }
        if self.variance_samples == 0
            || self.variance_seeds == 0
            || self.variance_populations.is_empty()
            || self.variance_iterations.is_empty()
        {
            return Err(RtError::config("variance analysis needs samples, seeds and a grid"));
        }
        // Delegated checks: these constructors own the invariants.
        self.perturb(self.attack_amplitude)?;
        self.de().validate()?;
        self.dataset_spec()?.validate()?;
        Ok(())
    }

    /// Dataset spec at the configured stream length: the default class
    /// palette with onset/duration ranges scaled proportionally.
    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let mut spec = DatasetSpec::default_spec();
        if self.stream_len != spec.n {
            let scale = self.stream_len as f64 / spec.n as f64;
            let s = |v: usize| (v as f64 * scale).round() as usize;
            for c in &mut spec.classes {
                c.onset = (s(c.onset.0), s(c.onset.1));
                c.dur = (s(c.dur.0).max(2), s(c.dur.1).max(2));
            }
            spec.n = self.stream_len;
        }
        Ok(spec)
    }

    pub fn perturb(&self, amplitude: f64) -> Result<PerturbConfig> {
        PerturbConfig::new(self.stream_len, self.n_segments, self.segment_len, amplitude)
    }

    pub fn de(&self) -> DeConfig {
        DeConfig {
            population: self.de_population,
            iterations: self.de_iterations,
            diff_weight: self.de_diff_weight,
            crossover: self.de_crossover,
        }
    }

    pub fn target_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.target_epochs,
            batch_size: self.target_batch,
            lr: self.target_lr,
        }
    }

    pub fn gen_hyper(&self) -> GenHyper {
        GenHyper {
            epochs: self.gen_epochs,
            lr: self.gen_lr,
        }
    }
}

/// Canonical text form. Every key appears exactly once, in a fixed order.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let floats = |v: &[f64]| v.iter().map(|a| format!("{a}")).collect::<Vec<_>>().join(",");
    let ints = |v: &[usize]| v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",");
    let mut s = String::from("# rtadv experiment configuration\n");
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("master_seed", cfg.master_seed.to_string());
    kv("per_class", cfg.per_class.to_string());
    kv("stream_len", cfg.stream_len.to_string());
    kv("frame_len", cfg.frame_len.to_string());
    kv("n_segments", cfg.n_segments.to_string());
    kv("segment_len", cfg.segment_len.to_string());
    kv("demo_amplitudes", floats(&cfg.demo_amplitudes));
    kv("sweep_amplitudes", floats(&cfg.sweep_amplitudes));
    kv("attack_amplitude", format!("{}", cfg.attack_amplitude));
    kv("delay", cfg.delay.to_string());
    kv("update_period", cfg.update_period.to_string());
    kv("target_epochs", cfg.target_epochs.to_string());
    kv("target_batch", cfg.target_batch.to_string());
    kv("target_lr", format!("{}", cfg.target_lr));
    kv("de_population", cfg.de_population.to_string());
    kv("de_iterations", cfg.de_iterations.to_string());
    kv("de_diff_weight", format!("{}", cfg.de_diff_weight));
    kv("de_crossover", format!("{}", cfg.de_crossover));
    kv("gen_epochs", cfg.gen_epochs.to_string());
    kv("gen_lr", format!("{}", cfg.gen_lr));
    kv("lambda", format!("{}", cfg.lambda));
    kv("eval_set", cfg.eval_set.token().to_string());
    kv("variance_samples", cfg.variance_samples.to_string());
    kv("variance_seeds", cfg.variance_seeds.to_string());
    kv("variance_populations", ints(&cfg.variance_populations));
    kv("variance_iterations", ints(&cfg.variance_iterations));
    kv("workers", cfg.workers.to_string());
    s
}

/// Parse the `key = value` format. Unknown keys are errors (they are almost
/// always typos); omitted keys keep their defaults; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: String| RtError::config(format!("config line {}: {what}", ln + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("`{line}` is not key = value")))?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(bad(format!("duplicate key {key}")));
        }
        let p_u64 = || value.parse::<u64>().map_err(|_| bad(format!("bad integer for {key}")));
        let p_usize = || value.parse::<usize>().map_err(|_| bad(format!("bad integer for {key}")));
        let p_f64 = || value.parse::<f64>().map_err(|_| bad(format!("bad number for {key}")));
        let p_f64s = || -> Result<Vec<f64>> {
            value
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad(format!("bad number list for {key}"))))
                .collect()
        };
        let p_usizes = || -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|t| t.trim().parse::<usize>().map_err(|_| bad(format!("bad integer list for {key}"))))
                .collect()
        };
        match key {
            "master_seed" => cfg.master_seed = p_u64()?,
            "per_class" => cfg.per_class = p_usize()?,
            "stream_len" => cfg.stream_len = p_usize()?,
            "frame_len" => cfg.frame_len = p_usize()?,
            "n_segments" => cfg.n_segments = p_usize()?,
            "segment_len" => cfg.segment_len = p_usize()?,
            "demo_amplitudes" => cfg.demo_amplitudes = p_f64s()?,
            "sweep_amplitudes" => cfg.sweep_amplitudes = p_f64s()?,
            "attack_amplitude" => cfg.attack_amplitude = p_f64()?,
            "delay" => cfg.delay = p_usize()?,
            "update_period" => cfg.update_period = p_usize()?,
            "target_epochs" => cfg.target_epochs = p_usize()?,
            "target_batch" => cfg.target_batch = p_usize()?,
            "target_lr" => cfg.target_lr = p_f64()?,
            "de_population" => cfg.de_population = p_usize()?,
            "de_iterations" => cfg.de_iterations = p_usize()?,
            "de_diff_weight" => cfg.de_diff_weight = p_f64()?,
            "de_crossover" => cfg.de_crossover = p_f64()?,
            "gen_epochs" => cfg.gen_epochs = p_usize()?,
            "gen_lr" => cfg.gen_lr = p_f64()?,
            "lambda" => cfg.lambda = p_f64()?,
            "eval_set" => cfg.eval_set = EvalSet::parse(value)?,
            "variance_samples" => cfg.variance_samples = p_usize()?,
            "variance_seeds" => cfg.variance_seeds = p_usize()?,
            "variance_populations" => cfg.variance_populations = p_usizes()?,
            "variance_iterations" => cfg.variance_iterations = p_usizes()?,
            "workers" => cfg.workers = p_usize()?,
            other => return Err(bad(format!("unknown key {other}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = render_config(&cfg);
        let back = parse_config(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(render_config(&back), text, "canonical form is a fixed point");
    }

    #[test]
    fn parse_handles_comments_spacing_and_partial_files() {
        let text = "\n# comment\n  master_seed =  99  # trailing\nper_class=3\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.master_seed, 99);
        assert_eq!(cfg.per_class, 3);
        assert_eq!(cfg.frame_len, ExperimentConfig::default().frame_len);
    }

    #[test]
    fn parse_rejects_unknown_and_duplicate_keys() {
        assert!(matches!(parse_config("masterseed = 1"), Err(RtError::Config(_))));
        assert!(matches!(
            parse_config("per_class = 1\nper_class = 2"),
            Err(RtError::Config(_))
        ));
        assert!(matches!(parse_config("just text"), Err(RtError::Config(_))));
    }

    #[test]
    fn validate_rejects_bad_amplitude_relationships() {
        let mut cfg = ExperimentConfig::default();
        cfg.attack_amplitude = 0.4; // in neither list
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.sweep_amplitudes = vec![0.5, 0.3];
        assert!(cfg.validate().is_err(), "must be increasing");

        let mut cfg = ExperimentConfig::default();
        cfg.demo_amplitudes = vec![0.5, 1.5];
        assert!(cfg.validate().is_err(), "amplitude beyond 1");

        let mut cfg = ExperimentConfig::default();
        cfg.delay = 10;
        assert!(cfg.validate().is_err(), "delay below update period");
    }

    #[test]
    fn dataset_spec_scales_with_stream_length() {
        let mut cfg = ExperimentConfig::default();
        cfg.stream_len = 500;
        let spec = cfg.dataset_spec().unwrap();
        assert_eq!(spec.n, 500);
        assert_eq!(spec.classes[0].onset, (0, 200));
        spec.validate().unwrap();
    }
}
