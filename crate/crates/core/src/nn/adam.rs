use serde::{Deserialize, Serialize};

use super::{Parameters, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive-moment optimiser over a flat parameter set.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, parameter_count: usize) -> Self {
        Self {
            config,
            step: 0,
            m: vec![0.0; parameter_count],
            v: vec![0.0; parameter_count],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn update<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let grads = grads.tensors();
        let mut off = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads) {
            for (i, (pv, gv)) in p.iter_mut().zip(g.iter()).enumerate() {
                let gi = gv.to_f64();
                let m = &mut self.m[off + i];
                let v = &mut self.v[off + i];
                *m = c.beta1 * *m + (1.0 - c.beta1) * gi;
                *v = c.beta2 * *v + (1.0 - c.beta2) * gi * gi;
                let step = c.lr * (*m / bc1) / ((*v / bc2).sqrt() + c.eps);
                *pv = <P::Elem as Scalar>::of(pv.to_f64() - step);
            }
            off += p.len();
        }
    }
}
