//! Synthetic labeled time-series corpus.
//!
//! Each class is a parametric generative process: a tone burst (optionally
//! chirped or amplitude-modulated) over a noisy floor, with per-sample jitter
//! in onset, duration and phase. The leading-silence jitter is deliberate —
//! the interesting temporal structure sits at a different position in every
//! sample, which is what makes attack *timing* a learnable quantity.
//!
//! Also provides the stratified four-way split used downstream and the
//! `RTADV-DS` binary corpus format.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, RtError};
use crate::numcore::io::{push_string, Reader};
use crate::seeds;

/// Generative parameters of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    /// Carrier period (points) at event start.
    pub period: f64,
    /// Carrier period at event end; a chirp if different from `period`.
    pub period_end: f64,
    /// Event duration range, inclusive, in points.
    pub dur: (usize, usize),
    /// Leading-silence range, inclusive: the event starts inside this window.
    pub onset: (usize, usize),
    /// Peak envelope level range, inclusive; drawn per sample.
    pub level: (f64, f64),
    /// Amplitude-modulation cycles over the event (0 = none).
    pub tremolo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    /// Stream length in points.
    pub n: usize,
    /// Standard deviation of the Gaussian noise floor.
    pub noise_std: f64,
    pub classes: Vec<ClassSpec>,
}

impl DatasetSpec {
    /// The default corpus: four classes distinguished purely by temporal
    /// structure (carrier frequency and chirp), identical level and duration
    /// statistics, onset jittered across the first 40% of the stream so the
    /// leading silence length varies widely per sample.
    pub fn default_spec() -> Self {
        let mk = |name: &str, period: f64, period_end: f64, tremolo: f64| ClassSpec {
            name: name.to_string(),
            period,
            period_end,
            dur: (450, 600),
            onset: (0, 400),
            level: (0.4, 0.9),
            tremolo,
        };
        DatasetSpec {
            n: 1000,
            noise_std: 0.02,
            classes: vec![
                mk("low", 80.0, 80.0, 0.0),
                mk("mid", 40.0, 40.0, 0.0),
                mk("high", 18.0, 18.0, 0.0),
                mk("chirp", 80.0, 18.0, 0.0),
            ],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(RtError::config("dataset stream length must be positive"));
        }
        if self.classes.len() < 2 {
            return Err(RtError::config("dataset needs at least two classes"));
        }
        if self.noise_std < 0.0 || !self.noise_std.is_finite() {
            return Err(RtError::config(format!(
                "noise_std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.dur.0 == 0 || c.dur.0 > c.dur.1 {
                return Err(RtError::config(format!(
                    "class {i} ({}): bad duration range {:?}",
                    c.name, c.dur
                )));
            }
            if c.onset.0 > c.onset.1 {
                return Err(RtError::config(format!(
                    "class {i} ({}): bad onset range {:?}",
                    c.name, c.onset
                )));
            }
            if c.onset.1 + c.dur.1 > self.n {
                return Err(RtError::config(format!(
                    "class {i} ({}): event can end at {} but the stream has only {} points",
                    c.name,
                    c.onset.1 + c.dur.1,
                    self.n
                )));
            }
            if c.period <= 1.0 || c.period_end <= 1.0 {
                return Err(RtError::config(format!(
                    "class {i} ({}): carrier periods must exceed 1 point",
                    c.name
                )));
            }
            if !(c.level.0 > 0.0 && c.level.0 <= c.level.1 && c.level.1 <= 1.0) {
                return Err(RtError::config(format!(
                    "class {i} ({}): level range must satisfy 0 < lo <= hi <= 1, got {:?}",
                    c.name, c.level
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesSample {
    pub id: u64,
    pub label: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: DatasetSpec,
    pub samples: Vec<TimeSeriesSample>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-class sample counts, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.spec.n_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn by_id(&self, id: u64) -> Option<&TimeSeriesSample> {
        // Ids are assigned sequentially at synthesis; fall back to a scan for
        // corpora reordered by hand.
        match self.samples.get(id as usize) {
            Some(s) if s.id == id => Some(s),
            _ => self.samples.iter().find(|s| s.id == id),
        }
    }
}

/// Render one event sample. The carrier phase advances by 2*pi/period(t)
/// per point with the period interpolated linearly over the event, so a
/// chirp sweeps smoothly; the envelope is a half-sine attack/decay.
fn render_sample(spec: &DatasetSpec, class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let c = &spec.classes[class];
    let onset = rng.gen_range(c.onset.0..=c.onset.1);
    let dur = rng.gen_range(c.dur.0..=c.dur.1);
    let level = rng.gen_range(c.level.0..=c.level.1);
    let phase0 = rng.gen_range(0.0..(2.0 * PI));
    let noise = Normal::new(0.0, spec.noise_std).expect("validated noise_std");

    let mut values = vec![0.0; spec.n];
    for v in &mut values {
        *v = noise.sample(rng);
    }
    let mut phase = phase0;
    for i in 0..dur {
        let tt = i as f64 / dur as f64;
        let period = c.period + (c.period_end - c.period) * tt;
        phase += 2.0 * PI / period;
        let mut env = (PI * tt).sin() * level;
        if c.tremolo > 0.0 {
            env *= 0.6 + 0.4 * (2.0 * PI * c.tremolo * tt).cos();
        }
        values[onset + i] += env * phase.sin();
    }
    for v in &mut values {
        *v = v.clamp(-1.0, 1.0);
    }
    values
}

/// Synthesize a balanced corpus: `per_class` samples per class, ids assigned
/// sequentially class-major. Each sample draws from its own derived RNG, so
/// the corpus content is independent of generation order.
pub fn synthesize(spec: &DatasetSpec, per_class: usize, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    if per_class == 0 {
        return Err(RtError::config("per_class must be positive"));
    }
    let mut samples = Vec::with_capacity(per_class * spec.n_classes());
    let mut id: u64 = 0;
    for class in 0..spec.n_classes() {
        for _ in 0..per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::item_seed(seed, id));
            let values = render_sample(spec, class, &mut rng);
            samples.push(TimeSeriesSample {
                id,
                label: class,
                values,
            });
            id += 1;
        }
    }
    Ok(Corpus {
        spec: spec.clone(),
        samples,
    })
}

/// The four-way split: a held-out `test2` slice first, then the remainder
/// divided into attack-training, attack-validation and `test1` evaluation
/// sets. Fields hold indices into `Corpus::samples`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub attack_train: Vec<usize>,
    pub attack_val: Vec<usize>,
    pub test1: Vec<usize>,
    pub test2: Vec<usize>,
}

impl CorpusSplit {
    /// The classifier's training pool: everything except `test2`.
    pub fn target_train(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.attack_train.len() + self.attack_val.len() + self.test1.len());
        v.extend_from_slice(&self.attack_train);
        v.extend_from_slice(&self.attack_val);
        v.extend_from_slice(&self.test1);
        v.sort_unstable();
        v
    }

    pub fn total(&self) -> usize {
        self.attack_train.len() + self.attack_val.len() + self.test1.len() + self.test2.len()
    }
}

/// Partition sizes from the pinned ratios: test2 takes 20% (floor), the
/// remainder splits 75% / 6.25% / 18.75% (floors, leftover to attack_train).
fn partition_sizes(total: usize) -> [usize; 4] {
    let test2 = total * 20 / 100;
    let rest = total - test2;
    let attack_train = rest * 75 / 100;
    let attack_val = rest * 625 / 10_000;
    let test1 = rest * 1875 / 10_000;
    let leftover = rest - attack_train - attack_val - test1;
    [attack_train + leftover, attack_val, test1, test2]
}

/// Largest-remainder apportionment of `size` across classes proportional to
/// `weights` and capped by them; ties go to the lower class index.
fn apportion(size: usize, weights: &[usize]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    assert!(size <= total, "apportion overdraw");
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut base: Vec<usize> = weights.iter().map(|&w| size * w / total).collect();
    let mut rem: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(c, &w)| (size * w % total, c))
        .collect();
    // Sort by remainder descending, class index ascending.
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = size - base.iter().sum::<usize>();
    for &(_, c) in &rem {
        if left == 0 {
            break;
        }
        if base[c] < weights[c] {
            base[c] += 1;
            left -= 1;
        }
    }
    // Capped classes may leave a residue; hand it to whoever has room.
    for c in 0..base.len() {
        while left > 0 && base[c] < weights[c] {
            base[c] += 1;
            left -= 1;
        }
    }
    base
}

/// Stratified split. Sizes are a pure function of the corpus size (the seed
/// only shuffles membership); per-class counts stay within one sample of
/// exact proportion for balanced corpora.
pub fn split_stratified(corpus: &Corpus, seed: u64) -> Result<CorpusSplit> {
    let total = corpus.len();
    if total < 4 {
        return Err(RtError::config(format!(
            "cannot split {total} samples into 4 partitions"
        )));
    }
    let n_classes = corpus.spec.n_classes();
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, s) in corpus.samples.iter().enumerate() {
        pools[s.label].push(i);
    }
    for (c, pool) in pools.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::item_seed(seed, c as u64));
        // Fisher-Yates via the rand shuffle; pool order is index-ascending
        // beforehand, so the permutation depends only on (seed, class).
        use rand::seq::SliceRandom;
        pool.shuffle(&mut rng);
    }

    let sizes = partition_sizes(total);
    let mut remaining: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    let mut cursor = vec![0usize; n_classes];
    let mut parts: [Vec<usize>; 4] = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    // Allocation order: test2 first (held out), then attack_train and
    // attack_val; test1 absorbs the exact leftovers.
    for (slot, part_idx) in [(3usize, 3usize), (0, 0), (1, 1)] {
        let alloc = apportion(sizes[slot], &remaining);
        for c in 0..n_classes {
            let take = alloc[c];
            parts[part_idx].extend_from_slice(&pools[c][cursor[c]..cursor[c] + take]);
            cursor[c] += take;
            remaining[c] -= take;
        }
    }
    for c in 0..n_classes {
        parts[2].extend_from_slice(&pools[c][cursor[c]..]);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [attack_train, attack_val, test1, test2] = parts;
    Ok(CorpusSplit {
        attack_train,
        attack_val,
        test1,
        test2,
    })
}

// --- RTADV-DS binary format ---------------------------------------------

pub const DS_MAGIC: &[u8; 8] = b"RTADV-DS";
pub const DS_VERSION: u32 = 1;

pub fn encode_corpus(corpus: &Corpus) -> Vec<u8> {
    let spec = &corpus.spec;
    let mut out = Vec::new();
    out.extend_from_slice(DS_MAGIC);
    out.extend_from_slice(&DS_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.n as u64).to_le_bytes());
    out.extend_from_slice(&spec.noise_std.to_le_bytes());
    out.extend_from_slice(&(spec.classes.len() as u32).to_le_bytes());
    for c in &spec.classes {
        push_string(&mut out, &c.name);
        out.extend_from_slice(&c.period.to_le_bytes());
        out.extend_from_slice(&c.period_end.to_le_bytes());
        out.extend_from_slice(&(c.dur.0 as u64).to_le_bytes());
        out.extend_from_slice(&(c.dur.1 as u64).to_le_bytes());
        out.extend_from_slice(&(c.onset.0 as u64).to_le_bytes());
        out.extend_from_slice(&(c.onset.1 as u64).to_le_bytes());
        out.extend_from_slice(&c.level.0.to_le_bytes());
        out.extend_from_slice(&c.level.1.to_le_bytes());
        out.extend_from_slice(&c.tremolo.to_le_bytes());
    }
    out.extend_from_slice(&(corpus.samples.len() as u64).to_le_bytes());
    for s in &corpus.samples {
        out.extend_from_slice(&s.id.to_le_bytes());
        out.extend_from_slice(&(s.label as u32).to_le_bytes());
        for &v in &s.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_corpus(buf: &[u8]) -> Result<Corpus> {
    let what = "RTADV-DS file";
    let mut r = Reader::new(buf, what);
    let magic = r.take(8, "magic")?;
    if magic != DS_MAGIC {
        return Err(RtError::format(what, format!("bad magic {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != DS_VERSION {
        return Err(RtError::format(what, format!("unsupported version {version}")));
    }
    let n = r.u64("stream length")? as usize;
    let noise_std = r.f64("noise_std")?;
    let n_classes = r.u32("class count")? as usize;
    let mut classes = Vec::with_capacity(n_classes);
    for i in 0..n_classes {
        classes.push(ClassSpec {
            name: r.string(&format!("class {i} name"))?,
            period: r.f64(&format!("class {i} period"))?,
            period_end: r.f64(&format!("class {i} period_end"))?,
            dur: (
                r.u64(&format!("class {i} dur lo"))? as usize,
                r.u64(&format!("class {i} dur hi"))? as usize,
            ),
            onset: (
                r.u64(&format!("class {i} onset lo"))? as usize,
                r.u64(&format!("class {i} onset hi"))? as usize,
            ),
            level: (
                r.f64(&format!("class {i} level lo"))?,
                r.f64(&format!("class {i} level hi"))?,
            ),
            tremolo: r.f64(&format!("class {i} tremolo"))?,
        });
    }
    let spec = DatasetSpec {
        n,
        noise_std,
        classes,
    };
    let count = r.u64("sample count")? as usize;
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let id = r.u64(&format!("sample {i} id"))?;
        let label = r.u32(&format!("sample {i} label"))? as usize;
        if label >= spec.n_classes() {
            return Err(RtError::format(
                what,
                format!("sample {i}: label {label} out of range for {} classes", spec.n_classes()),
            ));
        }
        let raw = r.take(n * 8, &format!("sample {i} values"))?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        samples.push(TimeSeriesSample { id, label, values });
    }
    r.expect_eof()?;
    Ok(Corpus { spec, samples })
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::write(path, encode_corpus(corpus))?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let buf = std::fs::read(path)?;
    decode_corpus(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_corpus(per_class: usize, seed: u64) -> Corpus {
        synthesize(&DatasetSpec::default_spec(), per_class, seed).unwrap()
    }

    #[test]
    fn synthesis_is_deterministic_and_seed_sensitive() {
        let a = small_corpus(3, 5);
        let b = small_corpus(3, 5);
        let c = small_corpus(3, 6);
        assert_eq!(a, b);
        assert_ne!(a.samples[0].values, c.samples[0].values);
    }

    #[test]
    fn corpus_is_balanced_and_in_range() {
        let corpus = small_corpus(4, 1);
        assert_eq!(corpus.class_counts(), vec![4, 4, 4, 4]);
        for s in &corpus.samples {
            assert_eq!(s.values.len(), 1000);
            assert!(s.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn leading_silence_varies_per_sample() {
        let corpus = small_corpus(8, 3);
        // First index where the signal rises clearly above the noise floor.
        let onset_of = |s: &TimeSeriesSample| s.values.iter().position(|v| v.abs() > 0.3);
        let onsets: Vec<_> = corpus
            .samples
            .iter()
            .filter(|s| s.label == 0)
            .map(|s| onset_of(s).expect("event present"))
            .collect();
        let distinct: std::collections::HashSet<_> = onsets.iter().collect();
        assert!(distinct.len() > 1, "all onsets identical: {onsets:?}");
        let spread = onsets.iter().max().unwrap() - onsets.iter().min().unwrap();
        assert!(spread > 50, "onset spread too small: {onsets:?}");
    }

    #[test]
    fn infeasible_event_rejected() {
        let mut spec = DatasetSpec::default_spec();
        spec.classes[0].dur = (900, 990); // onset up to 400 + 990 > 1000
        let err = synthesize(&spec, 1, 0).unwrap_err();
        assert!(matches!(err, RtError::Config(_)), "got {err:?}");
    }

    #[test]
    fn ids_resolve_by_direct_index() {
        let corpus = small_corpus(3, 2);
        for s in &corpus.samples {
            assert_eq!(corpus.by_id(s.id).unwrap().id, s.id);
        }
        assert!(corpus.by_id(9999).is_none());
    }

    #[test]
    fn split_sizes_match_pinned_arithmetic() {
        let corpus = small_corpus(250, 9); // 1000 samples
        let split = split_stratified(&corpus, 11).unwrap();
        assert_eq!(split.attack_train.len(), 600);
        assert_eq!(split.attack_val.len(), 50);
        assert_eq!(split.test1.len(), 150);
        assert_eq!(split.test2.len(), 200);
        assert_eq!(split.target_train().len(), 800);
    }

    #[test]
    fn split_partitions_are_disjoint_and_cover() {
        let corpus = small_corpus(25, 4); // 100 samples
        let split = split_stratified(&corpus, 7).unwrap();
        let mut seen = vec![false; corpus.len()];
        for part in [&split.attack_train, &split.attack_val, &split.test1, &split.test2] {
            for &i in part {
                assert!(!seen[i], "index {i} in two partitions");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&b| b), "some sample unassigned");
    }

    #[test]
    fn split_is_stratified_within_one() {
        let corpus = small_corpus(250, 4);
        let split = split_stratified(&corpus, 13).unwrap();
        for part in [&split.attack_train, &split.attack_val, &split.test1, &split.test2] {
            let mut per_class = vec![0usize; 4];
            for &i in part {
                per_class[corpus.samples[i].label] += 1;
            }
            let exact = part.len() as f64 / 4.0;
            for (c, &count) in per_class.iter().enumerate() {
                assert!(
                    (count as f64 - exact).abs() <= 1.0,
                    "class {c}: {count} vs exact {exact} in partition of {}",
                    part.len()
                );
            }
        }
    }

    #[test]
    fn split_seed_changes_membership_not_sizes() {
        let corpus = small_corpus(25, 4);
        let a = split_stratified(&corpus, 1).unwrap();
        let b = split_stratified(&corpus, 2).unwrap();
        assert_eq!(a.attack_train.len(), b.attack_train.len());
        assert_eq!(a.test2.len(), b.test2.len());
        assert_ne!(a.test2, b.test2, "seed had no effect on membership");
        assert_eq!(a, split_stratified(&corpus, 1).unwrap());
    }

    #[test]
    fn split_rejects_tiny_corpora() {
        let mut corpus = small_corpus(1, 0);
        corpus.samples.truncate(3);
        assert!(split_stratified(&corpus, 0).is_err());
    }

    #[test]
    fn corpus_round_trips_bit_exactly() {
        let corpus = small_corpus(2, 8);
        let bytes = encode_corpus(&corpus);
        let back = decode_corpus(&bytes).unwrap();
        assert_eq!(back.spec, corpus.spec);
        assert_eq!(back.samples.len(), corpus.samples.len());
        for (a, b) in corpus.samples.iter().zip(&back.samples) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            let abits: Vec<u64> = a.values.iter().map(|v| v.to_bits()).collect();
            let bbits: Vec<u64> = b.values.iter().map(|v| v.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
    }

    #[test]
    fn truncated_corpus_names_failing_sample() {
        let corpus = small_corpus(2, 8);
        let bytes = encode_corpus(&corpus);
        let err = decode_corpus(&bytes[..bytes.len() - 4]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sample 7"), "error should name the record: {msg}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.ds");
        let corpus = small_corpus(2, 4);
        save_corpus(&path, &corpus).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), corpus);
    }

    #[test]
    fn apportion_caps_and_distributes() {
        assert_eq!(apportion(50, &[200, 200, 200, 200]), vec![13, 13, 12, 12]);
        assert_eq!(apportion(10, &[3, 3, 100]), vec![0, 0, 10]);
        assert_eq!(apportion(0, &[5, 5]), vec![0, 0]);
    }
}
