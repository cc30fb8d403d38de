//! Adam optimizer over per-layer parameter blocks.

/// Standard Adam with bias correction. State is laid out exactly like the
/// network's parameter blocks (one `Vec<f64>` per layer).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    /// `block_sizes` is the per-layer parameter count of the network this
    /// optimizer will drive.
    pub fn new(lr: f64, block_sizes: &[usize]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update. `params` and `grads` must mirror the block layout given
    /// at construction.
    pub fn update(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>]) {
        assert_eq!(params.len(), self.m.len(), "adam block count mismatch");
        assert_eq!(grads.len(), self.m.len(), "adam grad block count mismatch");
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for (bi, (p_block, g_block)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p_block.len(), self.m[bi].len(), "adam block {bi} size");
            let m = &mut self.m[bi];
            let v = &mut self.v[bi];
            for i in 0..p_block.len() {
                let g = g_block[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / b1t;
                let vhat = v[i] / b2t;
                p_block[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam = Adam::new(0.1, &[3]);
        let mut params = vec![vec![1.0, -2.0, 0.5]];
        let grads = vec![vec![0.0; 3]];
        adam.update(&mut params, &grads);
        assert_eq!(params[0], vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_matches_closed_form() {
        // t=1: mhat = g, vhat = g^2, delta = lr * g / (|g| + eps).
        let mut adam = Adam::new(0.1, &[1]);
        let mut params = vec![vec![1.0]];
        adam.update(&mut params, &[vec![2.0]]);
        let expect = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((params[0][0] - expect).abs() < 1e-15, "got {}", params[0][0]);
    }

    #[test]
    fn descends_quadratic_bowl() {
        // f(w) = w^2, grad = 2w: |w| must shrink over 100 steps.
        let mut adam = Adam::new(0.05, &[1]);
        let mut params = vec![vec![3.0]];
        for _ in 0..100 {
            let g = vec![vec![2.0 * params[0][0]]];
            adam.update(&mut params, &g);
        }
        assert!(
            params[0][0].abs() < 0.5,
            "expected |w| to shrink from 3.0, got {}",
            params[0][0]
        );
    }

    #[test]
    fn step_counter_advances() {
        let mut adam = Adam::new(0.1, &[1]);
        assert_eq!(adam.step_count(), 0);
        adam.update(&mut vec![vec![0.0]], &[vec![1.0]]);
        adam.update(&mut vec![vec![0.0]], &[vec![1.0]]);
        assert_eq!(adam.step_count(), 2);
    }
}
