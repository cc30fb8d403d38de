//! The whole experiment, end to end, at toy scale.
//!
//! Everything the command-line tool does, driven from the library: synthesize
//! data, train the victim, collect expert demonstrations, measure expert
//! variance, clone the generator, attack held-out streams, sweep amplitudes,
//! and render the report with its figure tables. A second run into the same
//! directory reproduces every artifact byte for byte.
//!
//! This writes to a temporary directory and finishes in well under a minute;
//! the default configuration (see `ExperimentConfig::default()`) is the
//! full-scale version of exactly this run.
//!
//! Run with: cargo run --example full_pipeline

use rtadv::eval::{run_full_pipeline, ExperimentConfig, RunDir};

fn main() -> Result<(), rtadv::RtError> {
    let mut cfg = ExperimentConfig::default();
    cfg.master_seed = 11;
    cfg.per_class = 12;
    cfg.target_epochs = 6;
    cfg.de_population = 6;
    cfg.de_iterations = 12;
    cfg.gen_epochs = 4;
    cfg.variance_samples = 3;
    cfg.variance_seeds = 2;
    cfg.variance_populations = vec![6];
    cfg.variance_iterations = vec![5, 10];
    cfg.sweep_amplitudes = vec![0.1, 0.5, 1.0];
    cfg.validate()?;

    let dir = std::env::temp_dir().join("rtadv-example-pipeline");
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let run = RunDir::new(&dir);
    println!("running the full pipeline into {}\n", dir.display());
    run_full_pipeline(&cfg, &run, false)?;

    println!("\nartifacts:");
    let mut names: Vec<_> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    names.sort();
    for name in names {
        println!("  {name}");
    }

    println!("\n----- report.txt -----");
    print!("{}", std::fs::read_to_string(run.report())?);
    Ok(())
}
