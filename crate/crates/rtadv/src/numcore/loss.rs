//! Losses and the softmax head.

use crate::error::{Result, RtError};

/// Mean squared error over two equal-length slices.
pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "mse length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for (p, t) in pred.iter().zip(target) {
        let d = p - t;
        acc += d * d;
    }
    acc / pred.len() as f64
}

/// Gradient of `mse` with respect to `pred`.
pub fn mse_grad(pred: &[f64], target: &[f64], out: &mut [f64]) {
    let n = pred.len() as f64;
    for ((g, p), t) in out.iter_mut().zip(pred).zip(target) {
        *g = 2.0 * (p - t) / n;
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Cross-entropy of a softmax head against an integer class label.
/// Returns the loss; `grad_logits` (if given) receives `p - onehot`.
pub fn cross_entropy(logits: &[f64], class: usize, grad_logits: Option<&mut [f64]>) -> Result<f64> {
    if class >= logits.len() {
        return Err(RtError::shape(format!(
            "class {} out of range for {} logits",
            class,
            logits.len()
        )));
    }
    let p = softmax(logits);
    // Clamp away from zero so a confidently wrong head yields a large finite
    // loss instead of inf.
    let loss = -(p[class].max(1e-300)).ln();
    if let Some(g) = grad_logits {
        for (gi, pi) in g.iter_mut().zip(&p) {
            *gi = *pi;
        }
        g[class] -= 1.0;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_identical_vectors_is_zero() {
        let v = [0.3, -1.2, 4.0];
        assert_eq!(mse(&v, &v), 0.0);
    }

    #[test]
    fn mse_matches_hand_value() {
        // ((1-0)^2 + (0-2)^2) / 2 = 2.5
        assert_eq!(mse(&[1.0, 0.0], &[0.0, 2.0]), 2.5);
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[3.0, 3.0, 3.0, 3.0]);
        for v in &p {
            assert!((v - 0.25).abs() < 1e-15, "got {p:?}");
        }
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_handles_large_logits() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p[0] > 0.999_999);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_equal_logits_is_ln_k() {
        let loss = cross_entropy(&[0.0; 4], 2, None).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_bad_class() {
        assert!(cross_entropy(&[0.0; 4], 4, None).is_err());
    }

    #[test]
    fn cross_entropy_grad_matches_finite_difference() {
        let logits = [0.3, -0.7, 1.1, 0.05];
        let class = 1usize;
        let mut grad = [0.0; 4];
        cross_entropy(&logits, class, Some(&mut grad)).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut lp = logits;
            let mut lm = logits;
            lp[i] += h;
            lm[i] -= h;
            let fd = (cross_entropy(&lp, class, None).unwrap()
                - cross_entropy(&lm, class, None).unwrap())
                / (2.0 * h);
            let rel = (grad[i] - fd).abs() / fd.abs().max(grad[i].abs()).max(1e-10);
            assert!(rel < 1e-6, "logit {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn mse_grad_matches_finite_difference() {
        let pred = [0.5, -0.25, 2.0];
        let target = [0.0, 0.5, 1.5];
        let mut grad = [0.0; 3];
        mse_grad(&pred, &target, &mut grad);
        let h = 1e-6;
        for i in 0..3 {
            let mut pp = pred;
            let mut pm = pred;
            pp[i] += h;
            pm[i] -= h;
            let fd = (mse(&pp, &target) - mse(&pm, &target)) / (2.0 * h);
            assert!((grad[i] - fd).abs() < 1e-9);
        }
    }
}
