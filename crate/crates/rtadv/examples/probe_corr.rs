//! Scratch probe: do expert starts track the event onset, and does the
//! cloned generator recover that relationship?

use rtadv::dataset::load_corpus;
use rtadv::expert::load_demos;
use rtadv::generator::GeneratorNet;
use std::path::Path;

fn onset_of(values: &[f64]) -> usize {
    values.iter().position(|v| v.abs() > 0.25).unwrap_or(0)
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let va = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
    let vb = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
    cov / (va.sqrt() * vb.sqrt() + 1e-12)
}

fn main() -> Result<(), rtadv::RtError> {
    let run = Path::new("/tmp/full/run1");
    let corpus = load_corpus(&run.join("dataset.ds"))?;
    let demos = load_demos(&run.join("demos_amp0.5.bin"))?;
    let gen = GeneratorNet::load(&run.join("generator_amp0.5.nn"))?;

    let mut onsets = Vec::new();
    let mut expert_ranks: Vec<Vec<f64>> = vec![Vec::new(); 5];
    let mut gen_ranks: Vec<Vec<f64>> = vec![Vec::new(); 5];
    let mut drops = Vec::new();
    for traj in demos.usable().take(400) {
        let sample = corpus.by_id(traj.sample_id).unwrap();
        onsets.push(onset_of(&sample.values) as f64);
        for (k, &s) in traj.starts.iter().enumerate() {
            expert_ranks[k].push(s as f64);
        }
        let pred = gen.decode_starts(&gen.predict_full(&sample.values));
        for (k, &s) in pred.iter().enumerate() {
            gen_ranks[k].push(s as f64);
        }
        drops.push(traj.confidence_drop());
    }
    let n = onsets.len();
    println!("{n} demos probed; onset: min {:.0} max {:.0} mean {:.0}",
        onsets.iter().cloned().fold(f64::INFINITY, f64::min),
        onsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        onsets.iter().sum::<f64>() / n as f64);
    println!("mean demo confidence drop: {:.3}", drops.iter().sum::<f64>() / n as f64);
    println!("\nrank  corr(onset, expert)  corr(onset, generator)  corr(expert, generator)");
    for k in 0..5 {
        println!(
            "{k:>4}  {:>19.3}  {:>22.3}  {:>23.3}",
            corr(&onsets, &expert_ranks[k]),
            corr(&onsets, &gen_ranks[k]),
            corr(&expert_ranks[k], &gen_ranks[k])
        );
    }
    // Where do expert starts sit relative to the event window [onset, onset+dur]?
    let mut inside = 0usize;
    let mut before = 0usize;
    let mut after = 0usize;
    for (traj, &onset) in demos.usable().take(400).zip(&onsets) {
        let sample = corpus.by_id(traj.sample_id).unwrap();
        // crude event end: last index with |x| > 0.25
        let end = sample.values.iter().rposition(|v| v.abs() > 0.25).unwrap_or(999);
        for &s in &traj.starts {
            let s = s as f64;
            if s < onset { before += 1 } else if s <= end as f64 { inside += 1 } else { after += 1 }
        }
    }
    println!("\nexpert start placement: {before} before onset, {inside} inside event, {after} after event end");
    Ok(())
}
