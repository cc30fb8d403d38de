//! Central finite-difference verification of reverse-mode gradients.
//!
//! Used as the oracle for every layer's backward pass: perturb one parameter
//! at a time by ±h, evaluate the scalar loss twice, compare the secant slope
//! with the analytic gradient.

use super::network::Network;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub n_checked: usize,
    pub max_rel_err: f64,
    /// (layer index, parameter index) of the worst disagreement.
    pub worst: Option<(usize, usize)>,
}

/// Compare `analytic` (per-layer blocks, as returned by `Network::backward`)
/// against central differences of `loss` with step `h`.
///
/// The error for one parameter is `|a - n| / max(|a|, |n|, floor)` with
/// `floor = 1e-3`: a plain relative error for gradients of meaningful size,
/// while near-zero gradients are measured against the floor so that
/// f64 secant noise (~1e-10 for O(1) losses) cannot fail the check.
pub fn check_gradients(
    net: &mut Network,
    loss: impl Fn(&Network) -> f64,
    analytic: &[Vec<f64>],
    h: f64,
) -> GradCheckReport {
    const FLOOR: f64 = 1e-3;
    let mut report = GradCheckReport {
        n_checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for li in 0..analytic.len() {
        for i in 0..analytic[li].len() {
            let orig = net.param_blocks()[li][i];
            net.param_blocks_mut()[li][i] = orig + h;
            let up = loss(net);
            net.param_blocks_mut()[li][i] = orig - h;
            let down = loss(net);
            net.param_blocks_mut()[li][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[li][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            report.n_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((li, i));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::array::NdArray;
    use crate::numcore::layer::{Activation, LayerSpec};
    use crate::numcore::loss;

    /// End-to-end oracle on a single dense layer where the exact gradient is
    /// known in closed form (dL/dw_ij = 2/N (y_i - t_i) x_j).
    #[test]
    fn dense_layer_gradient_matches_finite_difference() {
        let mut net = Network::new(
            vec![LayerSpec::Dense {
                input_dim: 3,
                output_dim: 2,
                activation: Activation::Tanh,
            }],
            11,
        )
        .unwrap();
        let input = NdArray::from_vec(vec![2, 3], vec![0.4, -0.2, 0.9, -1.1, 0.3, 0.0]).unwrap();
        let target = [0.2, -0.5, 0.1, 0.8];

        let loss_fn = |n: &Network| {
            let (out, _) = n.forward(&input).unwrap();
            loss::mse(out.data(), &target)
        };

        let (out, cache) = net.forward(&input).unwrap();
        let mut g = vec![0.0; 4];
        loss::mse_grad(out.data(), &target, &mut g);
        let grad_out = NdArray::from_vec(vec![2, 2], g).unwrap();
        let (grads, _) = net.backward(&cache, &grad_out).unwrap();

        let report = check_gradients(&mut net, loss_fn, &grads, 1e-6);
        assert_eq!(report.n_checked, 8);
        assert!(
            report.max_rel_err < 1e-7,
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }

    /// Five-step unrolled LSTM against finite differences.
    #[test]
    fn lstm_bptt_gradient_matches_finite_difference() {
        let mut net = Network::new(
            vec![
                LayerSpec::Recurrent {
                    input_dim: 2,
                    hidden: 4,
                },
                LayerSpec::Dense {
                    input_dim: 4,
                    output_dim: 1,
                    activation: Activation::Linear,
                },
            ],
            23,
        )
        .unwrap();
        let input = NdArray::from_vec(
            vec![5, 2],
            vec![0.5, -0.3, 0.8, 0.1, -0.6, 0.4, 0.0, 0.9, -0.2, -0.7],
        )
        .unwrap();
        let target = [0.3, -0.1, 0.5, 0.0, -0.4];

        let loss_fn = |n: &Network| {
            let (out, _) = n.forward(&input).unwrap();
            loss::mse(out.data(), &target)
        };

        let (out, cache) = net.forward(&input).unwrap();
        let mut g = vec![0.0; 5];
        loss::mse_grad(out.data(), &target, &mut g);
        let grad_out = NdArray::from_vec(vec![5, 1], g).unwrap();
        let (grads, _) = net.backward(&cache, &grad_out).unwrap();

        let report = check_gradients(&mut net, loss_fn, &grads, 1e-6);
        assert!(
            report.max_rel_err < 1e-5,
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst
        );
    }
}
