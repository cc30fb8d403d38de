//! The victim: a streaming time-series classifier and its query facade.
//!
//! The model is a framed conv/pool trunk feeding an LSTM and a dense softmax
//! head read at the final frame. Attack code never touches the network
//! directly: it goes through [`BlackBox`], which exposes exactly two things —
//! a metered perturbed-input query and an unmetered clean-baseline probe —
//! and counts every metered call against an optional budget.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Corpus;
use crate::error::{Result, RtError};
use crate::numcore::io;
use crate::numcore::loss;
use crate::numcore::{Activation, Adam, LayerSpec, NdArray, Network};
use crate::seeds;

#[derive(Debug, Clone)]
pub struct TargetModel {
    net: Network,
    n_classes: usize,
    frame_len: usize,
}

/// Index of the first maximum (deterministic under ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 12,
            batch_size: 16,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub epoch_loss: Vec<f64>,
    /// Validation accuracy after each epoch.
    pub epoch_val_acc: Vec<f64>,
    /// Epoch whose parameters were kept (ties -> earliest).
    pub best_epoch: usize,
    pub final_val_acc: f64,
}

impl TargetModel {
    /// Paper-shaped classifier at desk scale: four conv(k=3)+pool(2) stages
    /// widening 1->8->16->24->32 channels, LSTM(64), dense 64->32 (tanh) and
    /// a linear head with one logit per class. `frame_len` must be at least
    /// 16 so the four pooling stages keep a positive width.
    pub fn new(n_classes: usize, frame_len: usize, seed: u64) -> Result<Self> {
        if n_classes < 2 {
            return Err(RtError::config("target needs at least two classes"));
        }
        if frame_len < 16 {
            return Err(RtError::config(format!(
                "frame_len must be >= 16 for the four pool stages, got {frame_len}"
            )));
        }
        let channels = [8usize, 16, 24, 32];
        let mut specs = vec![LayerSpec::Framing { frame_len }];
        let mut width = frame_len;
        let mut in_ch = 1usize;
        for &out_ch in &channels {
            specs.push(LayerSpec::Conv1d {
                in_channels: in_ch,
                out_channels: out_ch,
                kernel: 3,
                activation: Activation::Relu,
            });
            specs.push(LayerSpec::MaxPool1d { width: 2 });
            width /= 2;
            in_ch = out_ch;
        }
        let feat = in_ch * width;
        specs.push(LayerSpec::Recurrent {
            input_dim: feat,
            hidden: 64,
        });
        specs.push(LayerSpec::Dense {
            input_dim: 64,
            output_dim: 32,
            activation: Activation::Tanh,
        });
        specs.push(LayerSpec::Dense {
            input_dim: 32,
            output_dim: n_classes,
            activation: Activation::Linear,
        });
        Ok(TargetModel {
            net: Network::new(specs, seed)?,
            n_classes,
            frame_len,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    /// Class probabilities for a raw series: forward pass, softmax over the
    /// logits at the final frame.
    pub fn predict(&self, series: &[f64]) -> Vec<f64> {
        let input = NdArray::from_vec(vec![series.len()], series.to_vec()).expect("1-d input");
        let (out, _) = self.net.forward(&input).expect("shape-checked stack");
        let t = out.shape()[0];
        loss::softmax(out.row(t - 1))
    }

    /// Fraction of samples whose argmax matches the label.
    pub fn accuracy(&self, corpus: &Corpus, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        let hits = indices
            .iter()
            .filter(|&&i| {
                let s = &corpus.samples[i];
                argmax(&self.predict(&s.values)) == s.label
            })
            .count();
        hits as f64 / indices.len() as f64
    }

    /// Minibatch Adam on cross-entropy at the final frame. Keeps the
    /// parameters of the best validation epoch (ties -> earliest). With
    /// `epochs == 0` the network stays at initialization.
    pub fn train(
        &mut self,
        corpus: &Corpus,
        train_idx: &[usize],
        val_idx: &[usize],
        hyper: &TrainHyper,
        seed: u64,
    ) -> Result<TrainReport> {
        if train_idx.is_empty() {
            return Err(RtError::config("empty training set"));
        }
        if hyper.batch_size == 0 {
            return Err(RtError::config("batch_size must be positive"));
        }
        let mut adam = Adam::new(hyper.lr, &self.net.block_sizes());
        let mut order: Vec<usize> = train_idx.to_vec();
        let mut report = TrainReport {
            epoch_loss: Vec::new(),
            epoch_val_acc: Vec::new(),
            best_epoch: 0,
            final_val_acc: 0.0,
        };
        let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
        for epoch in 0..hyper.epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::item_seed(seed, epoch as u64));
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(hyper.batch_size) {
                let mut grads = self.net.zero_grads();
                let mut batch_loss = 0.0;
                for &i in batch {
                    let s = &corpus.samples[i];
                    let input = NdArray::from_vec(vec![s.values.len()], s.values.clone())?;
                    let (out, cache) = self.net.forward(&input)?;
                    let t = out.shape()[0];
                    let mut grad_row = vec![0.0; self.n_classes];
                    let l = loss::cross_entropy(out.row(t - 1), s.label, Some(&mut grad_row))?;
                    if !l.is_finite() {
                        return Err(RtError::NonFinite(format!(
                            "training loss diverged on sample {} (epoch {epoch})",
                            s.id
                        )));
                    }
                    batch_loss += l;
                    let mut gout = NdArray::zeros(out.shape());
                    gout.row_mut(t - 1).copy_from_slice(&grad_row);
                    let (g, _) = self.net.backward(&cache, &gout)?;
                    for (acc, gi) in grads.iter_mut().zip(&g) {
                        for (a, b) in acc.iter_mut().zip(gi) {
                            *a += b;
                        }
                    }
                }
                let scale = 1.0 / batch.len() as f64;
                for block in &mut grads {
                    for g in block.iter_mut() {
                        *g *= scale;
                    }
                }
                adam.update(self.net.param_blocks_mut(), &grads);
                epoch_loss += batch_loss;
            }
            report.epoch_loss.push(epoch_loss / order.len() as f64);
            let val_acc = self.accuracy(corpus, val_idx);
            report.epoch_val_acc.push(val_acc);
            let improved = best.as_ref().map_or(true, |(b, _)| val_acc > *b);
            if improved {
                best = Some((val_acc, self.net.param_blocks().to_vec()));
                report.best_epoch = epoch;
            }
        }
        if let Some((acc, params)) = best {
            self.net.set_params(params)?;
            report.final_val_acc = acc;
        } else {
            report.final_val_acc = self.accuracy(corpus, val_idx);
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = vec![
            ("kind".to_string(), "target".to_string()),
            ("n_classes".to_string(), self.n_classes.to_string()),
            ("frame_len".to_string(), self.frame_len.to_string()),
        ];
        io::save_network(path, &self.net, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (net, meta) = io::load_network(path)?;
        let get = |key: &str| -> Result<String> {
            meta.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| RtError::format("RTADV-NN file", format!("missing metadata key {key}")))
        };
        if get("kind")? != "target" {
            return Err(RtError::format(
                "RTADV-NN file",
                format!("expected kind=target, got {}", get("kind")?),
            ));
        }
        let n_classes: usize = get("n_classes")?
            .parse()
            .map_err(|_| RtError::format("RTADV-NN file", "bad n_classes metadata"))?;
        let frame_len: usize = get("frame_len")?
            .parse()
            .map_err(|_| RtError::format("RTADV-NN file", "bad frame_len metadata"))?;
        Ok(TargetModel {
            net,
            n_classes,
            frame_len,
        })
    }
}

/// Semi-black-box facade over the target. Attackers may submit inputs and
/// read class probabilities; nothing else leaks. `query` is metered against
/// an optional budget, `baseline` (the clean-sample probe the threat model
/// grants before an attack starts) is not.
pub struct BlackBox<'a> {
    model: &'a TargetModel,
    used: AtomicU64,
    budget: Option<u64>,
}

impl<'a> BlackBox<'a> {
    pub fn new(model: &'a TargetModel, budget: Option<u64>) -> Self {
        BlackBox {
            model,
            used: AtomicU64::new(0),
            budget,
        }
    }

    /// Metered prediction on (presumably perturbed) input.
    pub fn query(&self, series: &[f64]) -> Result<Vec<f64>> {
        let budget = self.budget.unwrap_or(u64::MAX);
        let prev = self
            .used
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |u| {
                (u < budget).then_some(u + 1)
            });
        if prev.is_err() {
            return Err(RtError::BudgetExhausted {
                used: self.used.load(Ordering::SeqCst),
                budget,
            });
        }
        Ok(self.model.predict(series))
    }

    /// Unmetered clean-baseline probe.
    pub fn baseline(&self, series: &[f64]) -> Vec<f64> {
        self.model.predict(series)
    }

    pub fn queries_used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn n_classes(&self) -> usize {
        self.model.n_classes()
    }

    /// Independent facade over the same model with a fresh counter (one per
    /// worker when fanning out; totals are the sum over forks).
    pub fn fork(&self) -> BlackBox<'a> {
        BlackBox {
            model: self.model,
            used: AtomicU64::new(0),
            budget: self.budget,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, DatasetSpec};

    fn tiny_model() -> TargetModel {
        TargetModel::new(4, 20, 3).unwrap()
    }

    #[test]
    fn prediction_is_a_simplex_even_on_zero_input() {
        let model = tiny_model();
        let p = model.predict(&vec![0.0; 1000]);
        assert_eq!(p.len(), 4);
        assert!(p.iter().all(|v| *v >= 0.0 && v.is_finite()));
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12, "sum {s}");
    }

    #[test]
    fn untrained_model_is_near_chance() {
        // Zero training epochs: accuracy on a balanced set stays close to
        // 1/k; asserting < 0.5 keeps the check robust to lucky inits.
        let spec = DatasetSpec::default_spec();
        let corpus = synthesize(&spec, 10, 17).unwrap();
        let model = tiny_model();
        let all: Vec<usize> = (0..corpus.len()).collect();
        let acc = model.accuracy(&corpus, &all);
        assert!(acc < 0.5, "untrained accuracy suspiciously high: {acc}");
    }

    #[test]
    fn zero_epoch_training_keeps_initialization() {
        let spec = DatasetSpec::default_spec();
        let corpus = synthesize(&spec, 2, 1).unwrap();
        let mut model = tiny_model();
        let before = model.network().param_blocks().to_vec();
        let idx: Vec<usize> = (0..corpus.len()).collect();
        let report = model
            .train(&corpus, &idx, &idx, &TrainHyper { epochs: 0, ..Default::default() }, 5)
            .unwrap();
        assert!(report.epoch_loss.is_empty());
        assert_eq!(model.network().param_blocks(), &before);
    }

    #[test]
    fn training_is_deterministic() {
        let spec = DatasetSpec::default_spec();
        let corpus = synthesize(&spec, 3, 2).unwrap();
        let idx: Vec<usize> = (0..corpus.len()).collect();
        let hyper = TrainHyper {
            epochs: 1,
            batch_size: 4,
            lr: 1e-3,
        };
        let mut a = tiny_model();
        let mut b = tiny_model();
        a.train(&corpus, &idx, &idx, &hyper, 5).unwrap();
        b.train(&corpus, &idx, &idx, &hyper, 5).unwrap();
        assert_eq!(a.network().param_blocks(), b.network().param_blocks());
    }

    #[test]
    fn model_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("target.nn");
        let model = tiny_model();
        model.save(&path).unwrap();
        let back = TargetModel::load(&path).unwrap();
        assert_eq!(back.n_classes(), 4);
        assert_eq!(back.frame_len(), 20);
        assert_eq!(back.network().param_blocks(), model.network().param_blocks());
    }

    #[test]
    fn blackbox_meters_queries_and_repeats_identically() {
        let model = tiny_model();
        let bb = BlackBox::new(&model, None);
        let x = vec![0.1; 1000];
        let a = bb.query(&x).unwrap();
        let b = bb.query(&x).unwrap();
        assert_eq!(a, b, "identical queries must match bitwise");
        assert_eq!(bb.queries_used(), 2);
        let _ = bb.baseline(&x);
        assert_eq!(bb.queries_used(), 2, "baseline must not meter");
    }

    #[test]
    fn blackbox_budget_exhausts_with_structured_error() {
        let model = tiny_model();
        let bb = BlackBox::new(&model, Some(2));
        let x = vec![0.0; 1000];
        bb.query(&x).unwrap();
        bb.query(&x).unwrap();
        let err = bb.query(&x).unwrap_err();
        assert!(
            matches!(err, RtError::BudgetExhausted { used: 2, budget: 2 }),
            "got {err:?}"
        );
        assert_eq!(bb.queries_used(), 2, "failed query must not consume budget");
    }

    #[test]
    fn forks_account_independently() {
        let model = tiny_model();
        let bb = BlackBox::new(&model, Some(10));
        let f1 = bb.fork();
        let x = vec![0.0; 1000];
        f1.query(&x).unwrap();
        assert_eq!(f1.queries_used(), 1);
        assert_eq!(bb.queries_used(), 0);
    }

    #[test]
    fn argmax_takes_first_max() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5, 0.1]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }
}
