//! Command-line front end: flag parsing and dispatch only; all behavior
//! lives in the library's `eval` module.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rtadv::eval::{self, parse_config, ExperimentConfig, RunDir};

#[derive(Parser)]
#[command(
    name = "rtadv",
    about = "Real-time adversarial attacks on streaming time-series classifiers, desk scale",
    version
)]
struct Cli {
    /// Experiment configuration file (key = value); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the master seed from the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Run directory for all artifacts.
    #[arg(long, global = true, value_name = "DIR", default_value = "rtadv-run")]
    out: PathBuf,

    /// Suppress progress output (warnings still go to stderr).
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the labeled corpus and persist it.
    GenData,
    /// Train the victim classifier.
    TrainTarget,
    /// Generate expert demonstrations at every demo amplitude.
    GenDemos,
    /// Expert stability analysis over a population/iteration grid.
    ExpertVariance,
    /// Behavior-clone one generator per demo amplitude.
    TrainGenerator,
    /// Evaluate all policies at the headline amplitude on the eval set.
    Attack,
    /// Evaluate the full amplitude grid on test1 and test2, then report.
    Sweep,
    /// Rebuild the metrics report from the run directory's files.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, rtadv::RtError> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = RunDir::new(&cli.out);
    let result = load_config(&cli).and_then(|cfg| match cli.cmd {
        Cmd::GenData => eval::gen_data(&cfg, &run, cli.quiet),
        Cmd::TrainTarget => eval::train_target(&cfg, &run, cli.quiet),
        Cmd::GenDemos => eval::gen_demos(&cfg, &run, cli.quiet),
        Cmd::ExpertVariance => eval::expert_variance(&cfg, &run, cli.quiet),
        Cmd::TrainGenerator => eval::train_generator(&cfg, &run, cli.quiet),
        Cmd::Attack => eval::attack(&cfg, &run, cli.quiet),
        Cmd::Sweep => eval::sweep(&cfg, &run, cli.quiet),
        Cmd::Report => eval::build_report(&run, cli.quiet),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
