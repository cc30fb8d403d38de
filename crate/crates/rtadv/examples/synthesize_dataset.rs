//! Synthesize the labeled corpus, inspect its class structure, and round-trip
//! it through the on-disk format.
//!
//! Each class is a tone burst with a distinct carrier (or chirp) over a noise
//! floor; onset, duration, level and phase jitter per sample. The onset
//! jitter is the point of the whole dataset: the informative region sits at a
//! different position in every sample, which is what makes attack *timing* a
//! learnable quantity.
//!
//! Run with: cargo run --example synthesize_dataset

use rtadv::dataset::{load_corpus, save_corpus, split_stratified, synthesize, DatasetSpec};

fn main() -> Result<(), rtadv::RtError> {
    let spec = DatasetSpec::default_spec();
    let corpus = synthesize(&spec, 50, 42)?;
    println!(
        "corpus: {} samples, {} classes, {} points each\n",
        corpus.len(),
        spec.n_classes(),
        spec.n
    );

    // Rough onset detector: first point clearly above the noise floor.
    let onset_of = |values: &[f64]| values.iter().position(|v| v.abs() > 0.15).unwrap_or(0);

    println!(
        "{:<8} {:>7} {:>12} {:>12} {:>10}",
        "class", "count", "mean onset", "onset std", "peak|x|"
    );
    for (label, class) in spec.classes.iter().enumerate() {
        let members: Vec<_> = corpus.samples.iter().filter(|s| s.label == label).collect();
        let onsets: Vec<f64> = members.iter().map(|s| onset_of(&s.values) as f64).collect();
        let mean = onsets.iter().sum::<f64>() / onsets.len() as f64;
        let std = (onsets.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>()
            / onsets.len() as f64)
            .sqrt();
        let peak = members
            .iter()
            .flat_map(|s| s.values.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        println!(
            "{:<8} {:>7} {:>12.1} {:>12.1} {:>10.3}",
            class.name,
            members.len(),
            mean,
            std,
            peak
        );
    }

    // One waveform sketch: where the event sits inside the stream.
    let s = &corpus.samples[0];
    let class = &spec.classes[s.label].name;
    println!("\nsample {} (class {class}), onset near {}:", s.id, onset_of(&s.values));
    let cols = 72;
    let mut sketch = String::new();
    for c in 0..cols {
        let lo = c * s.values.len() / cols;
        let hi = ((c + 1) * s.values.len() / cols).max(lo + 1);
        let energy = s.values[lo..hi].iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        sketch.push(match energy {
            e if e > 0.5 => '#',
            e if e > 0.2 => '+',
            e if e > 0.08 => '.',
            _ => ' ',
        });
    }
    println!("|{sketch}|");

    // The stratified split every downstream stage shares.
    let split = split_stratified(&corpus, 7)?;
    println!(
        "\nsplit: attack_train={} attack_val={} test1={} test2={} (target trains on all but test2)",
        split.attack_train.len(),
        split.attack_val.len(),
        split.test1.len(),
        split.test2.len()
    );

    // Round-trip through the binary corpus format.
    let dir = std::env::temp_dir().join("rtadv-example-dataset");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("corpus.ds");
    save_corpus(&path, &corpus)?;
    let back = load_corpus(&path)?;
    assert_eq!(back.samples.len(), corpus.samples.len());
    assert_eq!(back.samples[0].values, corpus.samples[0].values);
    println!("\nround-trip through {} ok ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
