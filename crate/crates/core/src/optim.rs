//! First-order optimizers over a list of parameter arrays.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, errors: &mut Vec<alloc::string::String>) {
        if let Self::Adam { beta1, beta2, eps } = *self {
            if !(0.0..1.0).contains(&beta1) {
                errors.push(alloc::format!("optimizer.beta1 must lie in [0, 1), got {beta1}"));
            }
            if !(0.0..1.0).contains(&beta2) {
                errors.push(alloc::format!("optimizer.beta2 must lie in [0, 1), got {beta2}"));
            }
            if !(eps > 0.0) {
                errors.push(alloc::format!("optimizer.eps must be positive, got {eps}"));
            }
        }
    }
}

/// Optimizer with per-coordinate state sized on the first step.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    lr: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, lr: f64) -> Self {
        Self { config, lr, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Arrays with `frozen[i]` set are left untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], frozen: &[bool]) -> Result<()> {
        if params.len() != grads.len() {
            bail!(Shape, "{} parameter arrays but {} gradient arrays", params.len(), grads.len());
        }
        let total: usize = params.iter().map(|p| p.len()).sum();
        if self.m.is_empty() {
            self.m = vec![0.0; total];
            self.v = vec![0.0; total];
        } else if self.m.len() != total {
            bail!(Shape, "optimizer state has {} entries, parameters have {total}", self.m.len());
        }
        self.step += 1;
        let mut offset = 0;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.len() != g.len() {
                bail!(Shape, "array {i}: {} parameters, {} gradients", p.len(), g.len());
            }
            let skip = frozen.get(i).copied().unwrap_or(false);
            let range = offset..offset + p.len();
            offset += p.len();
            if skip {
                continue;
            }
            match self.config {
                OptimizerConfig::Sgd => {
                    for (w, &d) in p.iter_mut().zip(g.iter()) {
                        *w -= self.lr * d;
                    }
                }
                OptimizerConfig::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - libm::pow(beta1, self.step as f64);
                    let c2 = 1.0 - libm::pow(beta2, self.step as f64);
                    let m = &mut self.m[range.clone()];
                    let v = &mut self.v[range];
                    for (((w, &d), mi), vi) in p.iter_mut().zip(g.iter()).zip(m).zip(v) {
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        *w -= self.lr * (*mi / c1) / (libm::sqrt(*vi / c2) + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_on_quadratic() {
        // f(w) = ½ a w², w0 = 2, a = 3: g = 6, m̂ = 6, v̂ = 36,
        // update = lr · 6 / (6 + eps)
        let lr = 1e-3;
        let mut w = [2.0];
        let g = [3.0 * w[0]];
        let mut opt = Optimizer::new(OptimizerConfig::default(), lr);
        opt.step(&mut [&mut w[..]], &[&g[..]], &[]).unwrap();
        let expected = 2.0 - lr * 6.0 / (6.0 + 1e-8);
        assert!((w[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn second_adam_step_matches_recursion() {
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.01);
        let mut w = [1.0, -0.5];
        let mut opt = Optimizer::new(OptimizerConfig::Adam { beta1: b1, beta2: b2, eps }, lr);
        let mut oracle = w;
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        for step in 1..=2 {
            let g = [2.0 * w[0], 4.0 * w[1]];
            opt.step(&mut [&mut w[..]], &[&g[..]], &[]).unwrap();
            for i in 0..2 {
                let gi = if i == 0 { 2.0 * oracle[0] } else { 4.0 * oracle[1] };
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / (1.0 - b1.powi(step));
                let vh = v[i] / (1.0 - b2.powi(step));
                oracle[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        for i in 0..2 {
            assert!((w[i] - oracle[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_and_frozen_arrays() {
        let mut a = [1.0];
        let mut b = [1.0];
        let mut opt = Optimizer::new(OptimizerConfig::Sgd, 0.5);
        opt.step(&mut [&mut a[..], &mut b[..]], &[&[2.0][..], &[2.0][..]], &[false, true]).unwrap();
        assert_eq!((a[0], b[0]), (0.0, 1.0));
    }
}
