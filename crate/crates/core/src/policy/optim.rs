//! Gradient clipping, AdamW, and a plateau learning-rate schedule.

use super::mlp::{Gradients, Mlp};

pub fn global_norm(grads: &Gradients) -> f64 {
    grads.tensors().iter().flat_map(|t| t.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales all gradients together when their global L2 norm exceeds
/// `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let scale = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Mlp,
    v: Mlp,
    step: u64,
}

impl AdamW {
    pub fn new(params: &Mlp, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p[i]);
            }
        }
    }
}

/// Cuts the learning rate when validation loss stalls.
///
/// After each cut the reference loss is forgotten, so the next epoch counts
/// as a fresh start and a further cut needs `patience` more stalled epochs
/// after it.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub threshold: f64,
    lr: f64,
    best: f64,
    stalled: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        Self { factor, patience, min_lr, threshold: 1e-8, lr, best: f64::INFINITY, stalled: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.threshold {
            self.best = val_loss;
            self.stalled = 0;
        } else {
            self.stalled += 1;
            if self.stalled >= self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.stalled = 0;
                self.best = f64::INFINITY;
            }
        }
        self.lr
    }
}
