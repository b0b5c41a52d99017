//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::ShapeError;
use crate::tensor::check_dim;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
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

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// One pair of moment buffers per parameter slice, sized by `lens`.
    pub fn new(config: AdamConfig, lens: impl IntoIterator<Item = usize>) -> Self {
        let (first, second) = lens.into_iter().map(|l| (vec![0.0; l], vec![0.0; l])).unzip();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first, &self.second)
    }

    /// Applies one update in place. Shapes are checked before anything is
    /// modified.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), ShapeError> {
        check_dim("parameter count", self.first.len(), params.len())?;
        check_dim("gradient count", self.first.len(), grads.len())?;
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            check_dim("parameter length", m.len(), p.len())?;
            check_dim("gradient length", m.len(), g.len())?;
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<(), ShapeError> {
    state.update(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0; 3];
        let mut s = AdamState::new(AdamConfig::default(), [3]);
        adam_step(&mut [&mut p], &[&g], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = vec![0.0; 4];
        let g = vec![0.3, -5.0, 1e-3, -2e2];
        let cfg = AdamConfig::default();
        let mut s = AdamState::new(cfg, [4]);
        adam_step(&mut [&mut p], &[&g], &mut s).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            let expected = -gi.signum() * cfg.lr * gi.abs() / (gi.abs() + cfg.eps);
            assert!((pi - expected).abs() < 1e-15);
            assert!((pi.abs() - cfg.lr).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_mismatch_leaves_state_untouched() {
        let mut p = vec![0.0; 2];
        let g = vec![1.0; 3];
        let mut s = AdamState::new(AdamConfig::default(), [2]);
        assert!(adam_step(&mut [&mut p], &[&g], &mut s).is_err());
        assert_eq!(s.step_count(), 0);
        assert_eq!(p, vec![0.0; 2]);
    }
}
