//! First-order optimizers over flat vectors.

use crate::error::{Error, Result};

fn check_lengths(expected: usize, x: &[f64], grad: &[f64]) -> Result<()> {
    for got in [x.len(), grad.len()] {
        if got != expected {
            return Err(Error::DimensionMismatch { expected, got });
        }
    }
    Ok(())
}

/// Heavy-ball SGD: `v ← μ·v + g`, `x ← x − lr·v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdMomentum {
    pub lr: f64,
    pub momentum: f64,
    pub velocity: Vec<f64>,
}

impl SgdMomentum {
    pub const DEFAULT_LR: f64 = 0.1;
    pub const DEFAULT_MOMENTUM: f64 = 0.5;

    pub fn new(len: usize, lr: f64, momentum: f64) -> Self {
        Self { lr, momentum, velocity: vec![0.0; len] }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) -> Result<()> {
        check_lengths(self.velocity.len(), x, grad)?;
        for ((xi, vi), gi) in x.iter_mut().zip(self.velocity.iter_mut()).zip(grad) {
            *vi = self.momentum * *vi + gi;
            *xi -= self.lr * *vi;
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 5e-3;

    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) -> Result<()> {
        check_lengths(self.m.len(), x, grad)?;
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            x[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
