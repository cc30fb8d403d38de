//! Pipeline stages. Each stage reads the config plus earlier artifacts from
//! the run directory, writes its own outputs there, and prints a short
//! summary. Orchestration is sequential; demo generation and attack
//! evaluation fan per-sample work out to a thread pool and sort results by
//! sample id before persistence, so output files are order-deterministic
//! regardless of worker count.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::dataset::{load_corpus, save_corpus, split_stratified, synthesize, Corpus, CorpusSplit};
use crate::error::{Result, RtError};
use crate::expert::{
    de_optimize, load_demos, measure_expert_variance, save_demos, DemoSet, Trajectory,
};
use crate::generator::{GenConfig, GeneratorNet};
use crate::perturb::EmissionSchedule;
use crate::seeds;
use crate::simulator::{run_attack, save_outcomes, OutcomeRecord, Policy, StreamConfig};
use crate::target::{BlackBox, TargetModel};

use super::config::{render_config, EvalSet, ExperimentConfig};
use super::metrics::eval_success_and_drop;
use super::report::build_report;
use super::RunDir;

macro_rules! note {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            println!($($arg)*);
        }
    };
}

/// Order-preserving parallel map with a shared work cursor. Worker count 0
/// means one thread per CPU; errors from any item abort with the first error
/// in item order.
pub(crate) fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let workers = if workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        workers
    }
    .min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let cursor = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<R>>> = Vec::new();
    slots.resize_with(items.len(), || None);
    let slot_refs: Vec<std::sync::Mutex<&mut Option<Result<R>>>> =
        slots.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                **slot_refs[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    drop(slot_refs);
    let mut out = Vec::with_capacity(items.len());
    for slot in slots {
        out.push(slot.expect("every slot visited")?);
    }
    Ok(out)
}

/// Write the canonical config snapshot, or verify it matches when the run
/// directory already has one — mixing configs within one run directory is
/// always a mistake.
fn ensure_snapshot(cfg: &ExperimentConfig, run: &RunDir) -> Result<()> {
    std::fs::create_dir_all(run.root())?;
    let rendered = render_config(cfg);
    let path = run.config();
    if path.exists() {
        let existing = std::fs::read_to_string(&path)?;
        if existing != rendered {
            return Err(RtError::config(format!(
                "{} holds a different configuration; use a fresh --out directory",
                path.display()
            )));
        }
        return Ok(());
    }
    std::fs::write(&path, rendered)?;
    Ok(())
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        return Err(RtError::config(format!(
            "missing {}: run `{produced_by}` first",
            path.display()
        )));
    }
    Ok(())
}

pub(crate) fn load_corpus_and_split(
    cfg: &ExperimentConfig,
    run: &RunDir,
) -> Result<(Corpus, CorpusSplit)> {
    require(&run.dataset(), "gen-data")?;
    let corpus = load_corpus(&run.dataset())?;
    let split = split_stratified(&corpus, seeds::stage_seed(cfg.master_seed, "split"))?;
    Ok((corpus, split))
}

fn load_target(run: &RunDir) -> Result<TargetModel> {
    require(&run.target(), "train-target")?;
    TargetModel::load(&run.target())
}

fn load_demo_sets(cfg: &ExperimentConfig, run: &RunDir) -> Result<Vec<(f64, DemoSet)>> {
    cfg.demo_amplitudes
        .iter()
        .map(|&a| {
            require(&run.demos(a), "gen-demos")?;
            Ok((a, load_demos(&run.demos(a))?))
        })
        .collect()
}

fn load_generators(cfg: &ExperimentConfig, run: &RunDir) -> Result<Vec<(f64, GeneratorNet)>> {
    cfg.demo_amplitudes
        .iter()
        .map(|&a| {
            require(&run.generator(a), "train-generator")?;
            Ok((a, GeneratorNet::load(&run.generator(a))?))
        })
        .collect()
}

/// Synthesize the corpus and persist it.
pub fn gen_data(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    cfg.validate()?;
    ensure_snapshot(cfg, run)?;
    let spec = cfg.dataset_spec()?;
    let corpus = synthesize(&spec, cfg.per_class, seeds::stage_seed(cfg.master_seed, "dataset"))?;
    save_corpus(&run.dataset(), &corpus)?;
    let split = split_stratified(&corpus, seeds::stage_seed(cfg.master_seed, "split"))?;
    note!(
        quiet,
        "dataset: {} samples ({} classes x {}), stream length {} -> {}",
        corpus.len(),
        spec.n_classes(),
        cfg.per_class,
        spec.n,
        run.dataset().display()
    );
    note!(
        quiet,
        "split: attack_train={} attack_val={} test1={} test2={}",
        split.attack_train.len(),
        split.attack_val.len(),
        split.test1.len(),
        split.test2.len()
    );
    Ok(())
}

/// Train the victim classifier on everything except test2.
pub fn train_target(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    cfg.validate()?;
    ensure_snapshot(cfg, run)?;
    let (corpus, split) = load_corpus_and_split(cfg, run)?;
    let mut model = TargetModel::new(
        corpus.spec.n_classes(),
        cfg.frame_len,
        seeds::stage_seed(cfg.master_seed, "target-init"),
    )?;
    let report = model.train(
        &corpus,
        &split.target_train(),
        &split.test2,
        &cfg.target_hyper(),
        seeds::stage_seed(cfg.master_seed, "target-train"),
    )?;
    model.save(&run.target())?;
    note!(
        quiet,
        "target: trained {} epochs, kept epoch {}, validation accuracy {:.4} -> {}",
        cfg.target_epochs,
        report.best_epoch,
        report.final_val_acc,
        run.target().display()
    );
    Ok(())
}

/// Run the expert over the attack pool at every demonstration amplitude.
pub fn gen_demos(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    cfg.validate()?;
    ensure_snapshot(cfg, run)?;
    let (corpus, split) = load_corpus_and_split(cfg, run)?;
    let model = load_target(run)?;
    // The expert sees everything the target trained on: the attack pool plus
    // both attack-side evaluation slices that need expert references.
    let indices = split.target_train();
    for &amp in &cfg.demo_amplitudes {
        let pcfg = cfg.perturb(amp)?;
        let dcfg = cfg.de();
        let stage = seeds::stage_seed(cfg.master_seed, &format!("demos-{amp}"));
        let mut trajectories: Vec<Trajectory> = par_map(&indices, cfg.workers, |&i| {
            let sample = &corpus.samples[i];
            let bb = BlackBox::new(&model, None);
            let run = de_optimize(&bb, sample, &pcfg, &dcfg, seeds::item_seed(stage, sample.id))?;
            Ok(Trajectory {
                sample_id: sample.id,
                starts: run.schedule.starts().to_vec(),
                original_class: run.original_class,
                original_confidence: run.original_confidence,
                final_confidence: run.final_confidence,
                truncated: run.truncated,
            })
        })?;
        trajectories.sort_by_key(|t| t.sample_id);
        let mean_drop = trajectories
            .iter()
            .map(|t| t.confidence_drop())
            .sum::<f64>()
            / trajectories.len() as f64;
        let demos = DemoSet {
            perturb: pcfg,
            de: dcfg,
            trajectories,
        };
        save_demos(&run.demos(amp), &demos)?;
        note!(
            quiet,
            "demos @ amplitude {amp}: {} trajectories, mean confidence drop {:.4} -> {}",
            demos.trajectories.len(),
            mean_drop,
            run.demos(amp).display()
        );
    }
    Ok(())
}

/// Expert stability analysis over a (population, iterations) grid.
pub fn expert_variance(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    cfg.validate()?;
    ensure_snapshot(cfg, run)?;
    let (corpus, split) = load_corpus_and_split(cfg, run)?;
    let model = load_target(run)?;
    let take = cfg.variance_samples.min(split.attack_train.len());
    let indices: Vec<usize> = split.attack_train[..take].to_vec();
    let mut grid = Vec::new();
    for &p in &cfg.variance_populations {
        for &i in &cfg.variance_iterations {
            grid.push((p, i));
        }
    }
    let bb = BlackBox::new(&model, None);
    let rows = measure_expert_variance(
        &bb,
        &corpus,
        &indices,
        &grid,
        cfg.variance_seeds,
        &cfg.perturb(cfg.attack_amplitude)?,
        seeds::stage_seed(cfg.master_seed, "variance"),
    )?;
    let mut tsv = String::from("population\titerations\truns\tmean_drop\tschedule_std\n");
    for r in &rows {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{:.6}\t{:.4}\n",
            r.population, r.iterations, r.n_runs, r.mean_drop, r.schedule_std
        ));
    }
    std::fs::write(run.table("fig5_variance"), tsv)?;
    for r in &rows {
        note!(
            quiet,
            "variance: pop={:<3} iters={:<3} runs={:<3} mean drop {:.4}, schedule std {:.2} points",
            r.population,
            r.iterations,
            r.n_runs,
            r.mean_drop,
            r.schedule_std
        );
    }
    note!(quiet, "variance table -> {}", run.table("fig5_variance").display());
    Ok(())
}

/// Behavior-clone one generator per demonstration amplitude. Training uses
/// only attack_train trajectories; attack_val and test1 demos are reserved
/// for evaluation.
pub fn train_generator(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    cfg.validate()?;
    ensure_snapshot(cfg, run)?;
    let (corpus, split) = load_corpus_and_split(cfg, run)?;
    let train_ids: std::collections::HashSet<u64> = split
        .attack_train
        .iter()
        .map(|&i| corpus.samples[i].id)
        .collect();
    for (amp, demos) in load_demo_sets(cfg, run)? {
        let train_demos = DemoSet {
            perturb: demos.perturb,
            de: demos.de,
            trajectories: demos
                .trajectories
                .iter()
                .filter(|t| train_ids.contains(&t.sample_id))
                .cloned()
                .collect(),
        };
        let gcfg = GenConfig::new(cfg.n_segments, cfg.frame_len, train_demos.perturb.max_start());
        let mut gen = GeneratorNet::new(
            gcfg,
            seeds::stage_seed(cfg.master_seed, &format!("generator-init-{amp}")),
        )?;
        let curve = gen.train_behavior_cloning(
            &train_demos,
            &corpus,
            &cfg.gen_hyper(),
            seeds::stage_seed(cfg.master_seed, &format!("generator-train-{amp}")),
        )?;
        gen.save(&run.generator(amp))?;
        note!(
            quiet,
            "generator @ amplitude {amp}: {} trajectories, loss {:.6} -> {:.6} over {} epochs -> {}",
            train_demos.trajectories.len(),
            curve.first().copied().unwrap_or(f64::NAN),
            curve.last().copied().unwrap_or(f64::NAN),
            curve.len(),
            run.generator(amp).display()
        );
    }
    Ok(())
}

/// One policy run in the evaluation grid.
struct Job {
    sample_idx: usize,
    amplitude: f64,
    kind: JobKind,
}

enum JobKind {
    /// Replay the expert schedule computed at the source amplitude.
    Expert { source: f64, starts: Vec<usize> },
    /// The generator variant trained at the source amplitude.
    Realtime { source: f64 },
    Random { seed: u64 },
}

/// Run every policy variant at every requested emission amplitude over one
/// evaluation set, in parallel over jobs. Expert variants exist only for
/// samples with demonstrations (test2 has none by design).
#[allow(clippy::too_many_arguments)]
fn run_eval_grid(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    split: &CorpusSplit,
    model: &TargetModel,
    demos: &[(f64, DemoSet)],
    gens: &[(f64, GeneratorNet)],
    set: EvalSet,
    amplitudes: &[f64],
    stage_tag: &str,
) -> Result<Vec<OutcomeRecord>> {
    let indices: &[usize] = match set {
        EvalSet::Test1 => &split.test1,
        EvalSet::Test2 => &split.test2,
        EvalSet::AttackVal => &split.attack_val,
    };
    let mut jobs: Vec<Job> = Vec::new();
    for &amp in amplitudes {
        let random_stage = seeds::stage_seed(
            cfg.master_seed,
            &format!("{stage_tag}-random-{}-{amp}", set.token()),
        );
        for &i in indices {
            let id = corpus.samples[i].id;
            for (src, ds) in demos {
                if let Some(traj) = ds.usable().find(|t| t.sample_id == id) {
                    jobs.push(Job {
                        sample_idx: i,
                        amplitude: amp,
                        kind: JobKind::Expert {
                            source: *src,
                            starts: traj.starts.clone(),
                        },
                    });
                }
            }
            for (src, _) in gens {
                jobs.push(Job {
                    sample_idx: i,
                    amplitude: amp,
                    kind: JobKind::Realtime { source: *src },
                });
            }
            jobs.push(Job {
                sample_idx: i,
                amplitude: amp,
                kind: JobKind::Random {
                    seed: seeds::item_seed(random_stage, id),
                },
            });
        }
    }
    let mut records = par_map(&jobs, cfg.workers, |job| {
        let pcfg = cfg.perturb(job.amplitude)?;
        let stream = StreamConfig::new(cfg.delay, cfg.update_period, pcfg)?;
        let sample = &corpus.samples[job.sample_idx];
        let bb = BlackBox::new(model, None);
        let (policy, token) = match &job.kind {
            JobKind::Expert { source, starts } => (
                Policy::ExpertOracle(EmissionSchedule::new(starts.clone(), &stream.perturb)?),
                format!("expert:{source}"),
            ),
            JobKind::Realtime { source } => {
                let gen = gens
                    .iter()
                    .find(|(a, _)| a == source)
                    .map(|(_, g)| g)
                    .expect("job built from this list");
                (Policy::Realtime(gen), format!("realtime:{source}"))
            }
            JobKind::Random { seed } => (Policy::RandomSchedule { seed: *seed }, "random".to_string()),
        };
        let outcome = run_attack(&policy, &bb, sample, &stream)?;
        Ok(OutcomeRecord::from_outcome(&outcome, token))
    })?;
    records.sort_by(|a, b| {
        (&a.policy, a.amplitude.to_bits(), a.sample_id)
            .cmp(&(&b.policy, b.amplitude.to_bits(), b.sample_id))
    });
    Ok(records)
}

fn print_group_table(records: &[OutcomeRecord], quiet: bool) {
    if quiet {
        return;
    }
    println!(
        "{:<14} {:>9} {:>5} {:>12} {:>10}",
        "policy", "amplitude", "n", "success_rate", "mean_drop"
    );
    for g in eval_success_and_drop(records) {
        println!(
            "{:<14} {:>9} {:>5} {:>12.4} {:>10.4}",
            g.policy, g.amplitude, g.count, g.success_rate, g.mean_drop
        );
    }
}

/// Evaluate every policy at the headline amplitude on the configured set.
pub fn attack(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    cfg.validate()?;
    ensure_snapshot(cfg, run)?;
    let (corpus, split) = load_corpus_and_split(cfg, run)?;
    let model = load_target(run)?;
    let demos = load_demo_sets(cfg, run)?;
    let gens = load_generators(cfg, run)?;
    let records = run_eval_grid(
        cfg,
        &corpus,
        &split,
        &model,
        &demos,
        &gens,
        cfg.eval_set,
        &[cfg.attack_amplitude],
        "attack",
    )?;
    let path = run.outcomes("attack", cfg.eval_set);
    save_outcomes(&path, &records)?;
    note!(quiet, "attack on {}: {} outcomes -> {}", cfg.eval_set.token(), records.len(), path.display());
    print_group_table(&records, quiet);
    Ok(())
}

/// Evaluate the full amplitude grid on test1 and test2, then rebuild the
/// report from the persisted artifacts (the report never reads in-memory
/// state, so this also exercises metric purity).
pub fn sweep(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    cfg.validate()?;
    ensure_snapshot(cfg, run)?;
    let (corpus, split) = load_corpus_and_split(cfg, run)?;
    let model = load_target(run)?;
    let demos = load_demo_sets(cfg, run)?;
    let gens = load_generators(cfg, run)?;
    for set in [EvalSet::Test1, EvalSet::Test2] {
        let records = run_eval_grid(
            cfg,
            &corpus,
            &split,
            &model,
            &demos,
            &gens,
            set,
            &cfg.sweep_amplitudes,
            "sweep",
        )?;
        let path = run.outcomes("sweep", set);
        save_outcomes(&path, &records)?;
        note!(quiet, "sweep on {}: {} outcomes -> {}", set.token(), records.len(), path.display());
        print_group_table(&records, quiet);
    }
    build_report(run, quiet)
}

/// All stages in order: the one-command reproduction path.
pub fn run_full_pipeline(cfg: &ExperimentConfig, run: &RunDir, quiet: bool) -> Result<()> {
    gen_data(cfg, run, quiet)?;
    train_target(cfg, run, quiet)?;
    gen_demos(cfg, run, quiet)?;
    expert_variance(cfg, run, quiet)?;
    train_generator(cfg, run, quiet)?;
    attack(cfg, run, quiet)?;
    sweep(cfg, run, quiet)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_preserves_order_and_propagates_errors() {
        let items: Vec<usize> = (0..100).collect();
        let out = par_map(&items, 7, |&i| Ok(i * 2)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());

        let err = par_map(&items, 4, |&i| {
            if i == 31 {
                Err(RtError::config("boom"))
            } else {
                Ok(i)
            }
        })
        .unwrap_err();
        assert!(matches!(err, RtError::Config(_)));

        let empty: Vec<usize> = vec![];
        assert_eq!(par_map(&empty, 0, |&i| Ok(i)).unwrap(), vec![]);
    }

    #[test]
    fn par_map_matches_sequential_for_any_worker_count() {
        let items: Vec<u64> = (0..50).collect();
        let baseline = par_map(&items, 1, |&i| Ok(seeds::splitmix64(i))).unwrap();
        for workers in [2, 3, 8] {
            let out = par_map(&items, workers, |&i| Ok(seeds::splitmix64(i))).unwrap();
            assert_eq!(out, baseline, "workers={workers}");
        }
    }
}
