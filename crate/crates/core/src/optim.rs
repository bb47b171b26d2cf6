//! Optimizers. Gradients of masked entries are forced to zero before every
//! step, so pruned parameters never revive.

use serde::{Deserialize, Serialize};

use crate::net::{Architecture, Masks, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Params,
    v: Params,
}

impl Adam {
    pub fn new(arch: &Architecture, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Params::zeros(arch),
            v: Params::zeros(arch),
        }
    }

    pub fn first_moment(&self) -> &Params {
        &self.m
    }

    pub fn second_moment(&self) -> &Params {
        &self.v
    }

    /// One bias-corrected Adam update of `params`; masked entries are left untouched.
    pub fn step(&mut self, params: &mut Params, grads: &Params, masks: &Masks) {
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let (b1, b2) = (self.beta1, self.beta2);
        let layers = params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut()))
            .zip(&masks.layers);
        for (((p, g), (m, v)), mask) in layers {
            let groups = [
                (&mut p.weights, &g.weights, &mut m.weights, &mut v.weights, &mask.weights),
                (&mut p.biases, &g.biases, &mut m.biases, &mut v.biases, &mask.biases),
            ];
            for (p, g, m, v, keep) in groups {
                for i in 0..p.len() {
                    let g = if keep[i] { g[i] } else { 0.0 };
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    if keep[i] {
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
                    }
                }
            }
        }
    }
}

/// SGD with momentum and L2 weight decay; trains edge-popup scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMomentum {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Params,
}

impl SgdMomentum {
    pub fn new(arch: &Architecture, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Params::zeros(arch),
        }
    }

    /// `v ← μ v + (g + λ θ)`, `θ ← θ − lr v`.
    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        for ((p, g), v) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.velocity.iter_mut())
        {
            let d = g + self.weight_decay * *p;
            *v = self.momentum * *v + d;
            *p -= lr * *v;
        }
    }
}
