//! Experiment orchestration: configuration, pipeline stages, the metric
//! suite, and the report/plot-table emitters behind the command-line surface.
//!
//! A *run directory* holds every artifact of one experiment — config
//! snapshot, dataset, models, demonstrations, outcomes, report, plot tables —
//! under fixed file names, so each stage can locate the outputs of earlier
//! ones and the report can be regenerated from disk alone.

mod config;
mod metrics;
mod report;
mod stages;

use std::path::{Path, PathBuf};

pub use config::{parse_config, render_config, EvalSet, ExperimentConfig};
pub use metrics::{
    eval_prediction_error_curve, eval_success_and_drop, eval_timing_error, find_group, GroupStats,
    Histogram, PredictionErrorCurve, TimingErrorStats,
};
pub use report::{build_report, compute_report, load_run_inputs, MetricsReport, RunInputs};
pub use stages::{
    attack, expert_variance, gen_data, gen_demos, run_full_pipeline, sweep, train_generator,
    train_target,
};

/// Fixed file layout of one experiment's artifacts.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.ds")
    }

    pub fn target(&self) -> PathBuf {
        self.root.join("target.nn")
    }

    pub fn demos(&self, amplitude: f64) -> PathBuf {
        self.root.join(format!("demos_amp{amplitude}.bin"))
    }

    pub fn generator(&self, amplitude: f64) -> PathBuf {
        self.root.join(format!("generator_amp{amplitude}.nn"))
    }

    pub fn outcomes(&self, kind: &str, set: EvalSet) -> PathBuf {
        self.root.join(format!("outcomes_{kind}_{}.txt", set.token()))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.txt")
    }

    pub fn table(&self, name: &str) -> PathBuf {
        self.root.join(format!("{name}.tsv"))
    }
}
