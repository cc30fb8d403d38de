//! The metrics report: a deterministic plain-text summary plus plot-ready
//! TSV tables, computed exclusively from the files a run directory holds.
//! Loading everything back from disk (rather than reusing in-memory state)
//! is deliberate — it proves every metric is a pure function of the
//! persisted artifacts, and it makes `report` rerunnable at any time.

use std::path::Path;

use crate::dataset::{Corpus, CorpusSplit};
use crate::error::{Result, RtError};
use crate::expert::DemoSet;
use crate::generator::GeneratorNet;
use crate::simulator::{load_outcomes, OutcomeRecord};
use crate::target::TargetModel;

use super::config::{parse_config, EvalSet, ExperimentConfig};
use super::metrics::{
    eval_prediction_error_curve, eval_success_and_drop, eval_timing_error, find_group, GroupStats,
    PredictionErrorCurve, TimingErrorStats,
};
use super::stages::load_corpus_and_split;
use super::RunDir;

/// Everything the report reads, loaded back from one run directory.
pub struct RunInputs {
    pub cfg: ExperimentConfig,
    pub corpus: Corpus,
    pub split: CorpusSplit,
    pub target: TargetModel,
    pub demos: Vec<(f64, DemoSet)>,
    pub generators: Vec<(f64, GeneratorNet)>,
    pub sweep_test1: Vec<OutcomeRecord>,
    pub sweep_test2: Vec<OutcomeRecord>,
    pub variance_table: String,
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

pub fn load_run_inputs(run: &RunDir) -> Result<RunInputs> {
    require(&run.config(), "gen-data")?;
    let cfg = parse_config(&std::fs::read_to_string(run.config())?)?;
    let (corpus, split) = load_corpus_and_split(&cfg, run)?;
    require(&run.target(), "train-target")?;
    let target = TargetModel::load(&run.target())?;
    let mut demos = Vec::new();
    let mut generators = Vec::new();
    for &a in &cfg.demo_amplitudes {
        require(&run.demos(a), "gen-demos")?;
        demos.push((a, crate::expert::load_demos(&run.demos(a))?));
        require(&run.generator(a), "train-generator")?;
        generators.push((a, GeneratorNet::load(&run.generator(a))?));
    }
    require(&run.outcomes("sweep", EvalSet::Test1), "sweep")?;
    require(&run.outcomes("sweep", EvalSet::Test2), "sweep")?;
    let sweep_test1 = load_outcomes(&run.outcomes("sweep", EvalSet::Test1))?;
    let sweep_test2 = load_outcomes(&run.outcomes("sweep", EvalSet::Test2))?;
    require(&run.table("fig5_variance"), "expert-variance")?;
    let variance_table = std::fs::read_to_string(run.table("fig5_variance"))?;
    Ok(RunInputs {
        cfg,
        corpus,
        split,
        target,
        demos,
        generators,
        sweep_test1,
        sweep_test2,
        variance_table,
    })
}

/// The computed report: summary statistics plus rendered table files.
pub struct MetricsReport {
    pub target_val_acc: f64,
    pub groups_test1: Vec<GroupStats>,
    pub groups_test2: Vec<GroupStats>,
    /// One prediction-error curve per generator variant (source amplitude).
    pub curves: Vec<(f64, PredictionErrorCurve)>,
    pub timing: TimingErrorStats,
    /// Groups that were expected from the config but absent from outcomes.
    pub warnings: Vec<String>,
    pub report_text: String,
    pub fig6: String,
    pub fig7_curve: String,
    pub fig7_heatmap: String,
    pub fig9: String,
}

fn expected_groups(cfg: &ExperimentConfig, set: EvalSet) -> Vec<(String, f64)> {
    let mut v = Vec::new();
    for &amp in &cfg.sweep_amplitudes {
        if set != EvalSet::Test2 {
            // test2 carries no demonstrations, so no expert baseline exists.
            for &src in &cfg.demo_amplitudes {
                v.push((format!("expert:{src}"), amp));
            }
        }
        for &src in &cfg.demo_amplitudes {
            v.push((format!("realtime:{src}"), amp));
        }
        v.push(("random".to_string(), amp));
    }
    v
}

pub fn compute_report(inputs: &RunInputs) -> Result<MetricsReport> {
    let cfg = &inputs.cfg;
    let headline = cfg.attack_amplitude;
    let target_val_acc = inputs.target.accuracy(&inputs.corpus, &inputs.split.test2);

    let groups_test1 = eval_success_and_drop(&inputs.sweep_test1);
    let groups_test2 = eval_success_and_drop(&inputs.sweep_test2);

    let mut warnings = Vec::new();
    for (set, groups) in [
        (EvalSet::Test1, &groups_test1),
        (EvalSet::Test2, &groups_test2),
    ] {
        for (policy, amp) in expected_groups(cfg, set) {
            if find_group(groups, &policy, amp).is_none() {
                warnings.push(format!(
                    "warning: no outcomes for {policy} @ amplitude {amp} on {} — group omitted",
                    set.token()
                ));
            }
        }
        let set_size = match set {
            EvalSet::Test1 => inputs.split.test1.len(),
            EvalSet::Test2 => inputs.split.test2.len(),
            EvalSet::AttackVal => inputs.split.attack_val.len(),
        };
        for g in groups.iter() {
            if g.count != set_size {
                warnings.push(format!(
                    "warning: group {} @ {} on {} has {} outcomes for a set of {}",
                    g.policy,
                    g.amplitude,
                    set.token(),
                    g.count,
                    set_size
                ));
            }
        }
    }

    // Prediction-error curves on attack_val, one per generator variant, each
    // scored against the expert demonstrations it was trained to imitate.
    let val_ids: Vec<u64> = inputs
        .split
        .attack_val
        .iter()
        .map(|&i| inputs.corpus.samples[i].id)
        .collect();
    let mut curves = Vec::new();
    for (amp, gen) in &inputs.generators {
        let demos = &inputs
            .demos
            .iter()
            .find(|(a, _)| a == amp)
            .expect("loader pairs demos and generators")
            .1;
        curves.push((*amp, eval_prediction_error_curve(gen, demos, &inputs.corpus, &val_ids)?));
    }

    // Timing analysis: the headline realtime group on test1 at the headline
    // emission amplitude.
    let token = format!("realtime:{headline}");
    let timing_outcomes: Vec<OutcomeRecord> = inputs
        .sweep_test1
        .iter()
        .filter(|o| o.policy == token && o.amplitude == headline)
        .cloned()
        .collect();
    let headline_gen = &inputs
        .generators
        .iter()
        .find(|(a, _)| *a == headline)
        .expect("validated: attack_amplitude is a demo amplitude")
        .1;
    let headline_demos = &inputs
        .demos
        .iter()
        .find(|(a, _)| *a == headline)
        .expect("validated: attack_amplitude is a demo amplitude")
        .1;
    let timing = eval_timing_error(&timing_outcomes, headline_demos, headline_gen, &inputs.corpus)?;

    // ---- tables ----
    let mut fig6 = String::from("set\tpolicy\tamplitude\tn\tsuccess_rate\tmean_drop\n");
    for (set, groups) in [("test1", &groups_test1), ("test2", &groups_test2)] {
        for g in groups.iter() {
            fig6.push_str(&format!(
                "{set}\t{}\t{}\t{}\t{:.6}\t{:.6}\n",
                g.policy, g.amplitude, g.count, g.success_rate, g.mean_drop
            ));
        }
    }

    let mut fig7_curve = String::from("fraction");
    for (amp, _) in &curves {
        fig7_curve.push_str(&format!("\terr_gen_{amp}"));
    }
    fig7_curve.push('\n');
    for i in 0..=10usize {
        fig7_curve.push_str(&format!("{}", i as f64 / 10.0));
        for (_, c) in &curves {
            fig7_curve.push_str(&format!("\t{:.6}", c.mean_abs_error[i]));
        }
        fig7_curve.push('\n');
    }

    let headline_curve = &curves
        .iter()
        .find(|(a, _)| *a == headline)
        .expect("validated: headline variant exists")
        .1;
    let mut fig7_heatmap = String::from("sample_id");
    for i in 0..=10usize {
        fig7_heatmap.push_str(&format!("\tf{}", i as f64 / 10.0));
    }
    fig7_heatmap.push('\n');
    for (id, errs) in headline_curve.per_sample.iter().take(64) {
        fig7_heatmap.push_str(&id.to_string());
        for e in errs {
            fig7_heatmap.push_str(&format!("\t{e:.6}"));
        }
        fig7_heatmap.push('\n');
    }

    let mut fig9 = String::from("bin_lo\tbin_hi\tcount\n");
    for (i, &count) in timing.histogram.counts.iter().enumerate() {
        let (lo, hi) = timing.histogram.bin_edges(i);
        fig9.push_str(&format!("{lo:.2}\t{hi:.2}\t{count}\n"));
    }

    // ---- report text ----
    let mut t = String::new();
    t.push_str("rtadv metrics report\n====================\n\n");
    t.push_str("[run]\n");
    t.push_str(&format!("master_seed = {}\n", cfg.master_seed));
    t.push_str(&format!(
        "corpus: {} samples, {} classes, stream length {}\n",
        inputs.corpus.len(),
        inputs.corpus.spec.n_classes(),
        cfg.stream_len
    ));
    t.push_str(&format!(
        "split: attack_train={} attack_val={} test1={} test2={}\n",
        inputs.split.attack_train.len(),
        inputs.split.attack_val.len(),
        inputs.split.test1.len(),
        inputs.split.test2.len()
    ));
    t.push_str(&format!(
        "perturbation: {} segments x {} points, delay {} / update period {}\n",
        cfg.n_segments, cfg.segment_len, cfg.delay, cfg.update_period
    ));
    t.push_str(&format!("target validation accuracy (test2): {target_val_acc:.4}\n\n"));

    for (set, groups) in [("test1", &groups_test1), ("test2", &groups_test2)] {
        t.push_str(&format!("[success and confidence drop @ {set}]\n"));
        t.push_str(&format!(
            "{:<14} {:>9} {:>5} {:>12} {:>10}\n",
            "policy", "amplitude", "n", "success_rate", "mean_drop"
        ));
        for g in groups.iter() {
            t.push_str(&format!(
                "{:<14} {:>9} {:>5} {:>12.4} {:>10.4}\n",
                g.policy, g.amplitude, g.count, g.success_rate, g.mean_drop
            ));
        }
        t.push('\n');
    }

    t.push_str("[expert variance]\n");
    for line in inputs.variance_table.lines() {
        t.push_str(&line.replace('\t', "  "));
        t.push('\n');
    }
    t.push('\n');

    t.push_str("[prediction error vs observation fraction @ attack_val]\n");
    t.push_str(&format!("{:<9}", "fraction"));
    for (amp, _) in &curves {
        t.push_str(&format!(" {:>12}", format!("gen:{amp}")));
    }
    t.push('\n');
    for i in 0..=10usize {
        t.push_str(&format!("{:<9}", i as f64 / 10.0));
        for (_, c) in &curves {
            t.push_str(&format!(" {:>12.4}", c.mean_abs_error[i]));
        }
        t.push('\n');
    }
    for (amp, c) in &curves {
        let ratio = c.mean_abs_error[10] / c.mean_abs_error[0];
        t.push_str(&format!("full/zero observation error ratio (gen:{amp}): {ratio:.4}\n"));
    }
    t.push('\n');

    t.push_str(&format!(
        "[timing error @ test1, realtime:{headline}, emission amplitude {headline}]\n"
    ));
    t.push_str(&format!(
        "paired trials: {}   dropped trials: {}\n",
        timing.paired_trials, timing.dropped_trials
    ));
    t.push_str(&format!("mean |actual - expert|:    {:.4}\n", timing.mean_abs_actual));
    t.push_str(&format!("mean |predicted - expert|: {:.4}\n", timing.mean_abs_predicted));
    t.push_str(&format!(
        "mean signed actual: {:.4}   std: {:.4}\n\n",
        timing.mean_signed_actual, timing.std_signed_actual
    ));

    t.push_str(&format!("[headline @ amplitude {headline}, test1]\n"));
    for token in [
        format!("expert:{headline}"),
        format!("realtime:{headline}"),
        "random".to_string(),
    ] {
        match find_group(&groups_test1, &token, headline) {
            Some(g) => t.push_str(&format!("{:<14} success {:.4}\n", g.policy, g.success_rate)),
            None => t.push_str(&format!("{token:<14} (no outcomes)\n")),
        }
    }
    let top = *cfg.sweep_amplitudes.last().expect("validated: nonempty");
    let rt_top = find_group(&groups_test1, &format!("realtime:{headline}"), top);
    let ex_top = find_group(&groups_test1, &format!("expert:{headline}"), top);
    match (rt_top, ex_top) {
        (Some(r), Some(e)) if e.success_rate > 0.0 => {
            t.push_str(&format!(
                "realtime:{headline} / expert:{headline} @ amplitude {top}: {:.4}\n",
                r.success_rate / e.success_rate
            ));
        }
        _ => t.push_str(&format!(
            "realtime:{headline} / expert:{headline} @ amplitude {top}: n/a\n"
        )),
    }
    t.push('\n');

    t.push_str("[tables]\n");
    for name in [
        "fig5_variance",
        "fig6_sweep",
        "fig7_curve",
        "fig7_heatmap",
        "fig9_hist",
    ] {
        t.push_str(&format!("{name}.tsv\n"));
    }

    Ok(MetricsReport {
        target_val_acc,
        groups_test1,
        groups_test2,
        curves,
        timing,
        warnings,
        report_text: t,
        fig6,
        fig7_curve,
        fig7_heatmap,
        fig9,
    })
}

/// Load, compute, then write — nothing is written until everything computed,
/// so a failing report leaves no partial output behind.
pub fn build_report(run: &RunDir, quiet: bool) -> Result<()> {
    let inputs = load_run_inputs(run)?;
    let report = compute_report(&inputs)?;
    for w in &report.warnings {
        eprintln!("{w}");
    }
    std::fs::write(run.report(), &report.report_text)?;
    std::fs::write(run.table("fig6_sweep"), &report.fig6)?;
    std::fs::write(run.table("fig7_curve"), &report.fig7_curve)?;
    std::fs::write(run.table("fig7_heatmap"), &report.fig7_heatmap)?;
    std::fs::write(run.table("fig9_hist"), &report.fig9)?;
    if !quiet {
        println!("report -> {}", run.report().display());
        print!("{}", report.report_text);
    }
    Ok(())
}
