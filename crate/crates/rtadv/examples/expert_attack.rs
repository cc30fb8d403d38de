//! Attack one sample offline with the differential-evolution expert.
//!
//! The expert sees the whole stream at once and only needs the victim's
//! output probabilities (no gradients). Its search space is tiny on purpose:
//! one start position per noise segment. We print the search trace, the
//! schedule it found, and what the victim says before and after.
//!
//! Run with: cargo run --example expert_attack

use rtadv::dataset::{split_stratified, synthesize, DatasetSpec};
use rtadv::expert::{de_optimize, DeConfig};
use rtadv::perturb::{apply, l0, realize, PerturbConfig};
use rtadv::target::{argmax, BlackBox, TargetModel, TrainHyper};

fn main() -> Result<(), rtadv::RtError> {
    let spec = DatasetSpec::default_spec();
    let corpus = synthesize(&spec, 80, 42)?;
    let split = split_stratified(&corpus, 7)?;

    let mut model = TargetModel::new(spec.n_classes(), 20, 1)?;
    let hyper = TrainHyper { epochs: 12, batch_size: 16, lr: 1e-3 };
    let report = model.train(&corpus, &split.target_train(), &split.test2, &hyper, 99)?;
    println!("victim trained: val acc {:.3}\n", report.final_val_acc);

    // Semi-black-box facade: probabilities only, every query metered.
    let blackbox = BlackBox::new(&model, None);
    let pcfg = PerturbConfig::new(1000, 5, 10, 0.5)?;
    let dcfg = DeConfig { population: 10, iterations: 40, ..DeConfig::default() };

    let sample = &corpus.samples[split.test1[0]];
    let clean = blackbox.baseline(&sample.values);
    println!(
        "sample {}: true class {}, victim says {} with confidence {:.3}",
        sample.id,
        sample.label,
        argmax(&clean),
        clean[argmax(&clean)]
    );

    let run = de_optimize(&blackbox, sample, &pcfg, &dcfg, 1234)?;
    println!(
        "\nDE search: {} queries, best original-class confidence per iteration:",
        run.queries
    );
    let last = run.trace.len() - 1;
    for (it, conf) in run.trace.iter().enumerate().step_by(8) {
        println!("  iter {:>3}: {:.4}", it, conf);
    }
    if last % 8 != 0 {
        println!("  iter {:>3}: {:.4}", last, run.trace[last]);
    }

    let r = realize(&run.schedule, &pcfg);
    let perturbed = apply(&sample.values, &r);
    let after = blackbox.baseline(&perturbed);
    println!("\nbest schedule (segment start positions): {:?}", run.schedule.starts());
    println!("points touched (l0): {} of {}", l0(&r), pcfg.n);
    println!(
        "victim on perturbed input: class {} with confidence {:.3} (was {:.3} on class {})",
        argmax(&after),
        after[argmax(&after)],
        run.original_confidence,
        run.original_class
    );
    let flipped = argmax(&after) != run.original_class;
    println!("attack {}", if flipped { "succeeded: label flipped" } else { "reduced confidence but did not flip the label" });
    Ok(())
}
