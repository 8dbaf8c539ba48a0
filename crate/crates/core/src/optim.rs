//! Adam with bias correction.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.99, eps: 1e-15 }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self { config, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            bail!(Config, "adam state for {} values given {} params and {} grads", self.m.len(), params.len(), grads.len());
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(beta1, t as f64);
        let bc2 = 1.0 - libm::pow(beta2, t as f64);
        let step_size = lr / bc1;
        let inv_bc2 = 1.0 / bc2;
        for i in 0..params.len() {
            let g = grads[i];
            let m = beta1 * self.m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            if m != 0.0 {
                params[i] -= step_size * m / (math::sqrt(v * inv_bc2) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3, AdamConfig::default());
        let mut p = [1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = [0.0, 0.0];
        s.step(&mut p, &[3.7, -0.002], 0.05).unwrap();
        assert!((p[0] + 0.05).abs() < 1e-12 && (p[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut s = AdamState::new(2, AdamConfig::default());
        assert!(s.step(&mut [0.0; 3], &[0.0; 3], 0.1).is_err());
    }

    #[test]
    fn quadratic_bowl_converges() {
        // oracle: run the scalar recurrence by hand and check both agree
        let mut s = AdamState::new(1, AdamConfig::default());
        let mut x = [1.0];
        let (mut m, mut v, mut xo) = (0.0f64, 0.0f64, 1.0f64);
        let mut reached = None;
        for t in 1..=500 {
            let g = 2.0 * x[0];
            s.step(&mut x, &[g], 0.05).unwrap();
            let go = 2.0 * xo;
            m = 0.9 * m + 0.1 * go;
            v = 0.99 * v + 0.01 * go * go;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.99f64.powi(t));
            xo -= 0.05 * mh / (vh.sqrt() + 1e-15);
            assert!((x[0] - xo).abs() < 1e-12);
            if reached.is_none() && x[0].abs() < 1e-3 {
                reached = Some(t);
            }
        }
        assert!(x[0].abs() < 1e-3, "x = {}", x[0]);
        assert!(reached.is_some());
    }
}
