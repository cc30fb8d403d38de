//! How stable is the expert across restarts, and what does search effort buy?
//!
//! The expert is stochastic: rerun it with a different seed and it may land on
//! a different schedule. That matters because the expert's output is training
//! data for the real-time generator -- noisy labels cap how well cloning can
//! work. This sweep varies population size and iteration count and reports,
//! per cell, the mean confidence drop (attack quality) and the across-seed
//! standard deviation of the chosen start positions (label noise).
//!
//! Run with: cargo run --example expert_variance

use rtadv::dataset::{split_stratified, synthesize, DatasetSpec};
use rtadv::expert::measure_expert_variance;
use rtadv::perturb::PerturbConfig;
use rtadv::target::{BlackBox, TargetModel, TrainHyper};

fn main() -> Result<(), rtadv::RtError> {
    let spec = DatasetSpec::default_spec();
    let corpus = synthesize(&spec, 80, 42)?;
    let split = split_stratified(&corpus, 7)?;

    let mut model = TargetModel::new(spec.n_classes(), 20, 1)?;
    let hyper = TrainHyper { epochs: 12, batch_size: 16, lr: 1e-3 };
    model.train(&corpus, &split.target_train(), &split.test2, &hyper, 99)?;

    let blackbox = BlackBox::new(&model, None);
    let pcfg = PerturbConfig::new(1000, 5, 10, 0.5)?;

    // Small grid, few samples: enough to see the trend in a few seconds.
    let grid: Vec<(usize, usize)> =
        [(6, 10), (6, 30), (10, 10), (10, 30)].into_iter().collect();
    let samples = &split.attack_train[..4];
    let rows = measure_expert_variance(&blackbox, &corpus, samples, &grid, 3, &pcfg, 31)?;

    println!(
        "{:>10} {:>10} {:>6} {:>11} {:>13}",
        "population", "iterations", "runs", "mean drop", "schedule std"
    );
    for row in &rows {
        println!(
            "{:>10} {:>10} {:>6} {:>11.4} {:>13.2}",
            row.population, row.iterations, row.n_runs, row.mean_drop, row.schedule_std
        );
    }
    println!(
        "\nReading the table: more iterations buy a larger confidence drop at the\n\
         same population (cells share initial populations, so the comparison is\n\
         paired), while the schedule spread across seeds stays wide -- the expert\n\
         finds *an* effective timing, not a canonical one. A cloning student has\n\
         to average through that noise."
    );
    Ok(())
}
