//! Verify the hand-written autodiff against finite differences.
//!
//! Every model here runs on a small from-scratch numeric core: dense, 1-D
//! convolution, max-pooling, framing and LSTM layers with reverse-mode
//! gradients, all checked against the one oracle nobody argues with -- the
//! central secant slope. This example builds a stack that uses every layer
//! type, backpropagates a cross-entropy loss, and compares each analytic
//! gradient entry with its numeric counterpart.
//!
//! Run with: cargo run --example gradient_check

use rtadv::numcore::{check_gradients, loss, Activation, LayerSpec, NdArray, Network};

fn main() -> Result<(), rtadv::RtError> {
    // Stream -> frames -> conv -> pool -> LSTM -> logits: the same layer
    // vocabulary the victim classifier and the attack generator are built of.
    let specs = vec![
        LayerSpec::Framing { frame_len: 16 },
        LayerSpec::Conv1d { in_channels: 1, out_channels: 3, kernel: 3, activation: Activation::Relu },
        LayerSpec::MaxPool1d { width: 2 },
        LayerSpec::Recurrent { input_dim: 24, hidden: 10 },
        LayerSpec::Dense { input_dim: 10, output_dim: 4, activation: Activation::Linear },
    ];
    let mut net = Network::new(specs, 3)?;
    println!(
        "network: {} parameter blocks, {} parameters total",
        net.block_sizes().len(),
        net.block_sizes().iter().sum::<usize>()
    );

    // A fixed input stream and label; loss = cross-entropy at the last frame.
    let t = 64;
    let input_vec: Vec<f64> = (0..t).map(|i| (i as f64 * 0.37).sin() * 0.8).collect();
    let input = NdArray::from_vec(vec![t], input_vec)?;
    let label = 2usize;

    let (out, cache) = net.forward(&input)?;
    let rows = out.shape()[0];
    let mut grad_row = vec![0.0; 4];
    let l = loss::cross_entropy(out.row(rows - 1), label, Some(&mut grad_row))?;
    println!("loss at the final frame: {l:.6}");

    let mut gout = NdArray::zeros(out.shape());
    gout.row_mut(rows - 1).copy_from_slice(&grad_row);
    let (analytic, _) = net.backward(&cache, &gout)?;

    let loss_fn = |n: &Network| {
        let (out, _) = n.forward(&input).expect("same shapes as above");
        let rows = out.shape()[0];
        loss::cross_entropy(out.row(rows - 1), label, None).expect("finite")
    };
    let report = check_gradients(&mut net, loss_fn, &analytic, 1e-5);

    println!(
        "checked {} gradient entries, max relative error {:.3e}",
        report.n_checked, report.max_rel_err
    );
    if let Some((layer, idx)) = report.worst {
        println!("worst entry: parameter block {layer}, index {idx}");
    }
    assert!(report.max_rel_err < 1e-5, "autodiff disagrees with finite differences");
    println!("analytic gradients match the finite-difference oracle");
    Ok(())
}
