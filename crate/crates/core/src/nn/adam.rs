use super::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter set, allocated on the first step.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            ..Default::default()
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. `grads` must visit tensors in the same order
    /// and sizes as `params`.
    pub fn step<P: Parameterized + ?Sized, G: Parameterized + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &G,
    ) -> Result<()> {
        let g = grads.flatten();
        if g.len() != params.param_count() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                g.len(),
                params.param_count()
            )));
        }
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {bad} is not finite")));
        }
        if self.m.len() != g.len() {
            self.m = vec![0.0; g.len()];
            self.v = vec![0.0; g.len()];
            self.step = 0;
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut pos = 0;
        params.visit_mut("", &mut |_, slice| {
            for p in slice.iter_mut() {
                let gi = g[pos];
                m[pos] = beta1 * m[pos] + (1.0 - beta1) * gi;
                v[pos] = beta2 * v[pos] + (1.0 - beta2) * gi * gi;
                let mhat = m[pos] / c1;
                let vhat = v[pos] / c2;
                *p -= learning_rate * mhat / (vhat.sqrt() + epsilon);
                pos += 1;
            }
        });
        Ok(())
    }
}
