use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Adam with bias correction and an optional step-wise learning-rate halving.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub halve_every: Option<u64>,
}

impl OptimizerState {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            halve_every: None,
        }
    }

    /// `lr = 1e-4`, `beta1 = 0.9`, `beta2 = 0.99`.
    pub fn with_defaults(len: usize) -> Self {
        Self::new(len, 1e-4, 0.9, 0.99)
    }

    pub fn current_lr(&self) -> f64 {
        match self.halve_every {
            Some(every) if every > 0 => self.lr * 0.5f64.powi((self.step / every) as i32),
            _ => self.lr,
        }
    }

    /// Applies one update in place. Non-finite gradients leave everything untouched.
    pub fn adam_step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient);
        }
        let lr = self.current_lr();
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / bc1;
            let v_hat = self.v[k] / bc2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
