//! AdamW with decoupled weight decay, and a step learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// One update of a single tensor at step `t` (1-based).
pub fn adamw_update(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    p: &AdamWParams,
    lr: f64,
    t: u64,
) {
    let c1 = 1.0 - p.beta1.powf(t as f64);
    let c2 = 1.0 - p.beta2.powf(t as f64);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
        v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g * g;
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        theta[i] -= lr * (mhat / (vhat.sqrt() + p.eps) + p.weight_decay * theta[i]);
    }
}

/// Optimizer state for a whole parameter tree.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub params: AdamWParams,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(params: AdamWParams, model: &dyn Parameters) -> Self {
        let zeros: Vec<Vec<f64>> = model
            .tensors()
            .into_iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            params,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, model: &mut dyn Parameters, grads: &dyn Parameters, lr: f64) {
        self.t += 1;
        let g = grads.tensors();
        let mut i = 0;
        let (m, v, p, t) = (&mut self.m, &mut self.v, &self.params, self.t);
        model.visit_mut(&mut |theta| {
            adamw_update(theta, &g[i], &mut m[i], &mut v[i], p, lr, t);
            i += 1;
        });
    }
}

/// `base * gamma^floor(epoch / step_size)`.
pub fn step_lr(base: f64, step_size: usize, gamma: f64, epoch: usize) -> f64 {
    base * gamma.powi((epoch / step_size.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let p = AdamWParams {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut theta = [0.5];
        let (mut m, mut v) = ([0.0], [0.0]);
        adamw_update(&mut theta, &[1.0], &mut m, &mut v, &p, 1e-3, 1);
        assert!((theta[0] - (0.5 - 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let p = AdamWParams {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut theta = [0.5, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adamw_update(&mut theta, &[0.0; 2], &mut m, &mut v, &p, 1e-3, 1);
        assert_eq!(theta, [0.5, -2.0]);
    }

    #[test]
    fn zero_gradient_with_decay_shrinks() {
        let p = AdamWParams {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut theta = [2.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adamw_update(&mut theta, &[0.0], &mut m, &mut v, &p, 0.01, 1);
        assert!((theta[0] - 2.0 * (1.0 - 0.01 * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn step_schedule() {
        assert_eq!(step_lr(1e-3, 10, 0.1, 9), 1e-3);
        assert!((step_lr(1e-3, 10, 0.1, 10) - 1e-4).abs() < 1e-18);
        assert!((step_lr(1e-3, 10, 0.1, 25) - 1e-5).abs() < 1e-18);
    }
}
