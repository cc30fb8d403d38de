//! Offline expert attacker: differential evolution over emission schedules.
//!
//! The expert sees the whole series and searches, through the query facade
//! only, for the segment start positions that most reduce the classifier's
//! confidence in its original prediction. This is the rand/1/bin scheme:
//! continuous genes (one per segment), mutation `r1 + F*(r2 - r3)`, binomial
//! crossover, greedy `<=` selection. Genes decode to a schedule by rounding,
//! clamping and sorting.
//!
//! One run consumes exactly `population * (iterations + 1)` metered queries:
//! the initial population plus one trial per member per generation.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Corpus, TimeSeriesSample};
use crate::error::{Result, RtError};
use crate::numcore::io::Reader;
use crate::perturb::{apply, realize, EmissionSchedule, PerturbConfig};
use crate::seeds;
use crate::target::{argmax, BlackBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeConfig {
    pub population: usize,
    pub iterations: usize,
    /// Differential weight F.
    pub diff_weight: f64,
    /// Crossover probability CR.
    pub crossover: f64,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            population: 10,
            iterations: 75,
            diff_weight: 0.5,
            crossover: 0.9,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(RtError::config(format!(
                "rand/1 mutation needs population >= 4, got {}",
                self.population
            )));
        }
        if !(0.0..=2.0).contains(&self.diff_weight) {
            return Err(RtError::config(format!("diff_weight out of range: {}", self.diff_weight)));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(RtError::config(format!("crossover out of range: {}", self.crossover)));
        }
        Ok(())
    }

    pub fn queries_per_run(&self) -> u64 {
        (self.population * (self.iterations + 1)) as u64
    }
}

/// Decode continuous genes into a valid schedule: round half-away-from-zero,
/// clamp into `[0, max_start]`, sort ascending.
pub fn decode(genes: &[f64], cfg: &PerturbConfig) -> EmissionSchedule {
    let hi = cfg.max_start() as f64;
    let starts: Vec<usize> = genes
        .iter()
        .map(|&g| g.round().clamp(0.0, hi) as usize)
        .collect();
    EmissionSchedule::new(starts, cfg).expect("clamped starts are always valid")
}

#[derive(Debug, Clone)]
pub struct DeResult {
    pub schedule: EmissionSchedule,
    /// Confidence of the original class under the best schedule found.
    pub final_confidence: f64,
    pub original_class: usize,
    pub original_confidence: f64,
    /// Best-so-far fitness after initialization and after each generation
    /// (length `iterations + 1` when not truncated). Non-increasing.
    pub trace: Vec<f64>,
    pub queries: u64,
    /// Set when the query budget ran out mid-search; the result is the best
    /// schedule seen so far.
    pub truncated: bool,
}

/// Run one DE search against the facade. The clean-sample probe (unmetered)
/// fixes the original class whose confidence the search minimizes.
pub fn de_optimize(
    blackbox: &BlackBox,
    sample: &TimeSeriesSample,
    pcfg: &PerturbConfig,
    dcfg: &DeConfig,
    seed: u64,
) -> Result<DeResult> {
    dcfg.validate()?;
    if sample.values.len() != pcfg.n {
        return Err(RtError::config(format!(
            "sample {} has {} points but the perturbation config says {}",
            sample.id,
            sample.values.len(),
            pcfg.n
        )));
    }
    let baseline = blackbox.baseline(&sample.values);
    let original_class = argmax(&baseline);
    let original_confidence = baseline[original_class];

    let dim = pcfg.n_segments;
    let hi = pcfg.max_start() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries: u64 = 0;

    // Fitness: confidence of the original class on the perturbed input.
    // Returns None when the budget is exhausted.
    let fitness = |genes: &[f64], queries: &mut u64| -> Result<Option<f64>> {
        let schedule = decode(genes, pcfg);
        let perturbed = apply(&sample.values, &realize(&schedule, pcfg));
        match blackbox.query(&perturbed) {
            Ok(p) => {
                *queries += 1;
                Ok(Some(p[original_class]))
            }
            Err(RtError::BudgetExhausted { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let mut pop: Vec<Vec<f64>> = (0..dcfg.population)
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..=hi)).collect())
        .collect();
    let mut fit = vec![f64::INFINITY; dcfg.population];
    let mut best_i = 0usize;
    let mut trace = Vec::with_capacity(dcfg.iterations + 1);
    let mut truncated = false;

    'search: {
        for i in 0..dcfg.population {
            match fitness(&pop[i], &mut queries)? {
                Some(f) => fit[i] = f,
                None => {
                    truncated = true;
                    break 'search;
                }
            }
            if fit[i] < fit[best_i] {
                best_i = i;
            }
        }
        trace.push(fit[best_i]);

        let mut trial = vec![0.0; dim];
        for _gen in 0..dcfg.iterations {
            for i in 0..dcfg.population {
                // Three distinct members, all different from i.
                let mut pick = || loop {
                    let r = rng.gen_range(0..dcfg.population);
                    if r != i {
                        break r;
                    }
                };
                let r1 = pick();
                let r2 = loop {
                    let r = pick();
                    if r != r1 {
                        break r;
                    }
                };
                let r3 = loop {
                    let r = pick();
                    if r != r1 && r != r2 {
                        break r;
                    }
                };
                let j_rand = rng.gen_range(0..dim);
                for j in 0..dim {
                    let mutant = (pop[r1][j] + dcfg.diff_weight * (pop[r2][j] - pop[r3][j]))
                        .clamp(0.0, hi);
                    trial[j] = if rng.gen::<f64>() < dcfg.crossover || j == j_rand {
                        mutant
                    } else {
                        pop[i][j]
                    };
                }
                match fitness(&trial, &mut queries)? {
                    Some(f) => {
                        if f <= fit[i] {
                            pop[i].copy_from_slice(&trial);
                            fit[i] = f;
                            if f < fit[best_i] {
                                best_i = i;
                            }
                        }
                    }
                    None => {
                        truncated = true;
                        break 'search;
                    }
                }
            }
            trace.push(fit[best_i]);
        }
    }

    if trace.is_empty() {
        // Budget died during initialization; report the clean baseline.
        trace.push(original_confidence);
        return Ok(DeResult {
            schedule: EmissionSchedule::empty(),
            final_confidence: original_confidence,
            original_class,
            original_confidence,
            trace,
            queries,
            truncated: true,
        });
    }

    Ok(DeResult {
        schedule: decode(&pop[best_i], pcfg),
        final_confidence: fit[best_i],
        original_class,
        original_confidence,
        trace,
        queries,
        truncated,
    })
}

/// One expert run distilled for cloning: what the expert did on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample_id: u64,
    pub starts: Vec<usize>,
    pub original_class: usize,
    pub original_confidence: f64,
    pub final_confidence: f64,
    pub truncated: bool,
}

impl Trajectory {
    pub fn confidence_drop(&self) -> f64 {
        self.original_confidence - self.final_confidence
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub perturb: PerturbConfig,
    pub de: DeConfig,
    pub trajectories: Vec<Trajectory>,
}

impl DemoSet {
    /// Trajectories usable as training labels (untruncated runs).
    pub fn usable(&self) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(|t| !t.truncated)
    }
}

/// Run the expert over a set of corpus indices. Per-sample seeds derive from
/// `seed` and the sample id, so the demo set is independent of iteration
/// order; trajectories come back sorted by sample id.
pub fn generate_demonstrations(
    blackbox: &BlackBox,
    corpus: &Corpus,
    indices: &[usize],
    pcfg: &PerturbConfig,
    dcfg: &DeConfig,
    seed: u64,
) -> Result<DemoSet> {
    let mut trajectories = Vec::with_capacity(indices.len());
    for &i in indices {
        let sample = &corpus.samples[i];
        let run = de_optimize(blackbox, sample, pcfg, dcfg, seeds::item_seed(seed, sample.id))?;
        trajectories.push(Trajectory {
            sample_id: sample.id,
            starts: run.schedule.starts().to_vec(),
            original_class: run.original_class,
            original_confidence: run.original_confidence,
            final_confidence: run.final_confidence,
            truncated: run.truncated,
        });
    }
    trajectories.sort_by_key(|t| t.sample_id);
    Ok(DemoSet {
        perturb: *pcfg,
        de: *dcfg,
        trajectories,
    })
}

/// One cell of the expert variance analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub population: usize,
    pub iterations: usize,
    /// Mean confidence drop over all (sample, seed) runs.
    pub mean_drop: f64,
    /// Mean over samples and segment ranks of the across-seed standard
    /// deviation of the decoded start position (in points).
    pub schedule_std: f64,
    pub n_runs: usize,
}

/// Sweep (population, iterations) cells; each cell reruns the expert with
/// `n_seeds` different seeds per sample. Seeds depend on the sample and the
/// population size but not on the iteration count, so cells that differ only
/// in iterations share initial populations (their mean drops are directly
/// comparable and non-decreasing in iterations).
pub fn measure_expert_variance(
    blackbox: &BlackBox,
    corpus: &Corpus,
    indices: &[usize],
    grid: &[(usize, usize)],
    n_seeds: usize,
    pcfg: &PerturbConfig,
    seed: u64,
) -> Result<Vec<VarianceRow>> {
    if n_seeds == 0 {
        return Err(RtError::config("n_seeds must be positive"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &(population, iterations) in grid {
        let dcfg = DeConfig {
            population,
            iterations,
            ..DeConfig::default()
        };
        let mut drops = Vec::new();
        let mut stds = Vec::new();
        for &i in indices {
            let sample = &corpus.samples[i];
            let sample_seed = seeds::item_seed(seed, sample.id);
            let mut schedules: Vec<Vec<usize>> = Vec::with_capacity(n_seeds);
            for k in 0..n_seeds {
                let run_seed =
                    seeds::item_seed(sample_seed, ((population as u64) << 32) | k as u64);
                let run = de_optimize(blackbox, sample, pcfg, &dcfg, run_seed)?;
                drops.push(run.original_confidence - run.final_confidence);
                schedules.push(run.schedule.starts().to_vec());
            }
            // Across-seed spread per segment rank, averaged over ranks.
            for rank in 0..pcfg.n_segments {
                let xs: Vec<f64> = schedules.iter().map(|s| s[rank] as f64).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
                stds.push(var.sqrt());
            }
        }
        let n_runs = drops.len();
        rows.push(VarianceRow {
            population,
            iterations,
            mean_drop: drops.iter().sum::<f64>() / n_runs.max(1) as f64,
            schedule_std: stds.iter().sum::<f64>() / stds.len().max(1) as f64,
            n_runs,
        });
    }
    Ok(rows)
}

// --- RTADV-DEMO binary format --------------------------------------------

pub const DEMO_MAGIC: &[u8; 10] = b"RTADV-DEMO";
pub const DEMO_VERSION: u32 = 1;

pub fn encode_demos(demos: &DemoSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(DEMO_MAGIC);
    out.extend_from_slice(&DEMO_VERSION.to_le_bytes());
    out.extend_from_slice(&(demos.perturb.n as u64).to_le_bytes());
    out.extend_from_slice(&(demos.perturb.n_segments as u64).to_le_bytes());
    out.extend_from_slice(&(demos.perturb.segment_len as u64).to_le_bytes());
    out.extend_from_slice(&demos.perturb.amplitude.to_le_bytes());
    out.extend_from_slice(&(demos.de.population as u64).to_le_bytes());
    out.extend_from_slice(&(demos.de.iterations as u64).to_le_bytes());
    out.extend_from_slice(&demos.de.diff_weight.to_le_bytes());
    out.extend_from_slice(&demos.de.crossover.to_le_bytes());
    out.extend_from_slice(&(demos.trajectories.len() as u64).to_le_bytes());
    for t in &demos.trajectories {
        out.extend_from_slice(&t.sample_id.to_le_bytes());
        out.extend_from_slice(&(t.original_class as u32).to_le_bytes());
        out.extend_from_slice(&t.original_confidence.to_le_bytes());
        out.extend_from_slice(&t.final_confidence.to_le_bytes());
        out.push(t.truncated as u8);
        out.extend_from_slice(&(t.starts.len() as u32).to_le_bytes());
        for &s in &t.starts {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
    }
    out
}

pub fn decode_demos(buf: &[u8]) -> Result<DemoSet> {
    let what = "RTADV-DEMO file";
    let mut r = Reader::new(buf, what);
    let magic = r.take(10, "magic")?;
    if magic != DEMO_MAGIC {
        return Err(RtError::format(what, format!("bad magic {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != DEMO_VERSION {
        return Err(RtError::format(what, format!("unsupported version {version}")));
    }
    let n = r.u64("perturb n")? as usize;
    let n_segments = r.u64("perturb n_segments")? as usize;
    let segment_len = r.u64("perturb segment_len")? as usize;
    let amplitude = r.f64("perturb amplitude")?;
    let perturb = PerturbConfig::new(n, n_segments, segment_len, amplitude)
        .map_err(|e| RtError::format(what, format!("invalid perturb config: {e}")))?;
    let de = DeConfig {
        population: r.u64("de population")? as usize,
        iterations: r.u64("de iterations")? as usize,
        diff_weight: r.f64("de diff_weight")?,
        crossover: r.f64("de crossover")?,
    };
    let count = r.u64("trajectory count")? as usize;
    let mut trajectories = Vec::with_capacity(count);
    for i in 0..count {
        let sample_id = r.u64(&format!("trajectory {i} sample_id"))?;
        let original_class = r.u32(&format!("trajectory {i} original_class"))? as usize;
        let original_confidence = r.f64(&format!("trajectory {i} original_confidence"))?;
        let final_confidence = r.f64(&format!("trajectory {i} final_confidence"))?;
        let truncated = r.u8(&format!("trajectory {i} truncated"))? != 0;
        let n_starts = r.u32(&format!("trajectory {i} start count"))? as usize;
        if n_starts > n_segments {
            return Err(RtError::format(
                what,
                format!("trajectory {i}: {n_starts} starts exceed {n_segments} segments"),
            ));
        }
        let mut starts = Vec::with_capacity(n_starts);
        for j in 0..n_starts {
            starts.push(r.u64(&format!("trajectory {i} start {j}"))? as usize);
        }
        trajectories.push(Trajectory {
            sample_id,
            starts,
            original_class,
            original_confidence,
            final_confidence,
            truncated,
        });
    }
    r.expect_eof()?;
    Ok(DemoSet {
        perturb,
        de,
        trajectories,
    })
}

pub fn save_demos(path: &Path, demos: &DemoSet) -> Result<()> {
    std::fs::write(path, encode_demos(demos))?;
    Ok(())
}

pub fn load_demos(path: &Path) -> Result<DemoSet> {
    let buf = std::fs::read(path)?;
    decode_demos(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, DatasetSpec};
    use crate::target::TargetModel;
    use proptest::prelude::*;

    fn pcfg() -> PerturbConfig {
        PerturbConfig::new(1000, 5, 10, 0.5).unwrap()
    }

    fn fixture() -> (TargetModel, Corpus) {
        let corpus = synthesize(&DatasetSpec::default_spec(), 2, 21).unwrap();
        (TargetModel::new(4, 20, 9).unwrap(), corpus)
    }

    #[test]
    fn query_count_is_exact() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, None);
        let dcfg = DeConfig {
            population: 5,
            iterations: 3,
            ..DeConfig::default()
        };
        let run = de_optimize(&bb, &corpus.samples[0], &pcfg(), &dcfg, 42).unwrap();
        assert_eq!(run.queries, 5 * 4);
        assert_eq!(bb.queries_used(), 5 * 4);
        assert_eq!(run.trace.len(), 4);
        assert!(!run.truncated);
    }

    #[test]
    fn zero_iterations_returns_best_initial_member() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, None);
        let dcfg = DeConfig {
            population: 6,
            iterations: 0,
            ..DeConfig::default()
        };
        let run = de_optimize(&bb, &corpus.samples[1], &pcfg(), &dcfg, 7).unwrap();
        assert_eq!(run.queries, 6);
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.schedule.len(), 5);
    }

    #[test]
    fn trace_is_non_increasing_and_seeded() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, None);
        let dcfg = DeConfig {
            population: 5,
            iterations: 6,
            ..DeConfig::default()
        };
        let a = de_optimize(&bb, &corpus.samples[2], &pcfg(), &dcfg, 3).unwrap();
        let b = de_optimize(&bb, &corpus.samples[2], &pcfg(), &dcfg, 3).unwrap();
        assert_eq!(a.schedule, b.schedule);
        assert_eq!(a.trace, b.trace);
        for w in a.trace.windows(2) {
            assert!(w[1] <= w[0], "best-so-far increased: {:?}", a.trace);
        }
        assert!(a.final_confidence <= a.trace[0]);
    }

    #[test]
    fn budget_exhaustion_truncates_with_partial_result() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, Some(12));
        let dcfg = DeConfig {
            population: 5,
            iterations: 10,
            ..DeConfig::default()
        };
        let run = de_optimize(&bb, &corpus.samples[0], &pcfg(), &dcfg, 1).unwrap();
        assert!(run.truncated);
        assert_eq!(run.queries, 12);
        assert_eq!(run.schedule.len(), 5, "best-so-far schedule still returned");
    }

    #[test]
    fn demonstrations_cover_subset_and_sort_by_id() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, None);
        let dcfg = DeConfig {
            population: 4,
            iterations: 1,
            ..DeConfig::default()
        };
        let demos =
            generate_demonstrations(&bb, &corpus, &[5, 0, 3], &pcfg(), &dcfg, 99).unwrap();
        let ids: Vec<u64> = demos.trajectories.iter().map(|t| t.sample_id).collect();
        assert_eq!(ids, vec![0, 3, 5]);
        assert_eq!(bb.queries_used(), 3 * 4 * 2);
        assert!(demos.trajectories.iter().all(|t| t.starts.len() == 5));
    }

    #[test]
    fn empty_subset_yields_empty_demo_set() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, None);
        let demos =
            generate_demonstrations(&bb, &corpus, &[], &pcfg(), &DeConfig::default(), 1).unwrap();
        assert!(demos.trajectories.is_empty());
        assert_eq!(bb.queries_used(), 0);
    }

    #[test]
    fn variance_rows_share_seeds_across_iteration_counts() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, None);
        let grid = [(4usize, 0usize), (4, 2)];
        let rows =
            measure_expert_variance(&bb, &corpus, &[0, 1], &grid, 2, &pcfg(), 5).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n_runs, 4);
        // Same initial populations, more iterations: drop cannot get worse.
        assert!(
            rows[1].mean_drop >= rows[0].mean_drop - 1e-12,
            "drop {} at 2 iters below {} at 0",
            rows[1].mean_drop,
            rows[0].mean_drop
        );
        assert!(rows.iter().all(|r| r.schedule_std >= 0.0));
    }

    #[test]
    fn demo_set_round_trips() {
        let demos = DemoSet {
            perturb: pcfg(),
            de: DeConfig::default(),
            trajectories: vec![Trajectory {
                sample_id: 3,
                starts: vec![10, 200, 300, 400, 500],
                original_class: 2,
                original_confidence: 0.9,
                final_confidence: 0.4,
                truncated: false,
            }],
        };
        let bytes = encode_demos(&demos);
        assert_eq!(decode_demos(&bytes).unwrap(), demos);
        let err = decode_demos(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("trajectory 0"), "{err}");
    }

    #[test]
    fn population_below_four_rejected() {
        let (model, corpus) = fixture();
        let bb = BlackBox::new(&model, None);
        let dcfg = DeConfig {
            population: 3,
            ..DeConfig::default()
        };
        assert!(de_optimize(&bb, &corpus.samples[0], &pcfg(), &dcfg, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Any gene vector, including wildly out-of-bounds values, decodes to
        /// a valid sorted schedule within bounds.
        #[test]
        fn decode_always_yields_valid_schedules(
            genes in proptest::collection::vec(-1e6f64..1e6, 5)
        ) {
            let c = pcfg();
            let s = decode(&genes, &c);
            prop_assert_eq!(s.len(), 5);
            let starts = s.starts();
            for w in starts.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!(*starts.last().unwrap() <= c.max_start());
        }
    }
}
