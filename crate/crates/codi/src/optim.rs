//! Adaptive-moment optimizers over flat parameter slices.
//!
//! `Adam` is the plain variant; `AdamW` applies decoupled weight decay
//! (`theta -= lr * wd * theta` alongside the moment update, never entering
//! the moments). One state instance per parameter vector.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

#[derive(Debug, Clone)]
pub struct AdamState {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize, kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        AdamState {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let mut update = self.lr * m_hat / (v_hat.sqrt() + self.eps);
            if self.kind == OptimizerKind::AdamW && self.weight_decay != 0.0 {
                update += self.lr * self.weight_decay * params[i];
            }
            params[i] -= update;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_descends_a_quadratic() {
        // f(x) = (x - 3)^2, gradient 2(x - 3).
        let mut x = vec![0.0f64];
        let mut opt = AdamState::new(1, OptimizerKind::Adam, 0.1, 0.0);
        for _ in 0..500 {
            let g = vec![2.0 * (x[0] - 3.0)];
            opt.step(&mut x, &g);
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn adamw_decays_without_gradient() {
        let mut x = vec![1.0f64];
        let mut adamw = AdamState::new(1, OptimizerKind::AdamW, 1e-2, 1e-1);
        for _ in 0..10 {
            adamw.step(&mut x, &[0.0]);
        }
        // Pure decay: x_{t+1} = x_t (1 - lr*wd).
        let expected = (1.0f64 - 1e-3).powi(10);
        assert!((x[0] - expected).abs() < 1e-9);

        let mut y = vec![1.0f64];
        let mut adam = AdamState::new(1, OptimizerKind::Adam, 1e-2, 1e-1);
        for _ in 0..10 {
            adam.step(&mut y, &[0.0]);
        }
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // With bias correction the first Adam step is lr * g/|g| (up to eps).
        let mut x = vec![0.0f64];
        let mut opt = AdamState::new(1, OptimizerKind::Adam, 5e-4, 0.0);
        opt.step(&mut x, &[123.4]);
        assert!((x[0] + 5e-4).abs() < 1e-8);
    }
}
