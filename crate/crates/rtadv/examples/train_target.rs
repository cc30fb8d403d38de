//! Train the streaming classifier and watch it generalize.
//!
//! The target slides a frame-level feature extractor over the stream and
//! integrates evidence recurrently, so it emits a label distribution at every
//! frame boundary -- exactly the interface a real-time attacker faces. Here we
//! train it on a small corpus, print the learning curve, and show how
//! confidence sharpens as more of the stream is observed.
//!
//! Run with: cargo run --example train_target

use rtadv::dataset::{split_stratified, synthesize, DatasetSpec};
use rtadv::target::{argmax, TargetModel, TrainHyper};

fn main() -> Result<(), rtadv::RtError> {
    let spec = DatasetSpec::default_spec();
    let corpus = synthesize(&spec, 80, 42)?;
    let split = split_stratified(&corpus, 7)?;
    println!(
        "corpus: {} samples | train on {} | validate on {}\n",
        corpus.len(),
        split.target_train().len(),
        split.test2.len()
    );

    let mut model = TargetModel::new(spec.n_classes(), 20, 1)?;
    let hyper = TrainHyper { epochs: 12, batch_size: 16, lr: 1e-3 };
    let report = model.train(&corpus, &split.target_train(), &split.test2, &hyper, 99)?;

    println!("{:<7} {:>12} {:>10}", "epoch", "train loss", "val acc");
    for (e, (loss, acc)) in report.epoch_loss.iter().zip(&report.epoch_val_acc).enumerate() {
        let marker = if e == report.best_epoch { "  <- kept" } else { "" };
        println!("{:<7} {:>12.4} {:>10.3}{marker}", e, loss, acc);
    }
    println!("\nfinal validation accuracy: {:.3}", report.final_val_acc);

    // Streaming view: prediction after each quarter of one held-out sample.
    let sample = &corpus.samples[split.test2[0]];
    println!(
        "\nsample {} (true class {}): confidence in the true class as the stream arrives",
        sample.id, sample.label
    );
    let n = sample.values.len();
    for quarters in 1..=4 {
        let prefix = &sample.values[..n * quarters / 4];
        let probs = model.predict(prefix);
        println!(
            "  after {:>4} points: p[true] = {:.3}, argmax = {}",
            prefix.len(),
            probs[sample.label],
            argmax(&probs)
        );
    }
    Ok(())
}
