use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Float, ParamStore};
use crate::{Error, Result};

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
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            moments: IndexMap::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Apply one update from the accumulated gradients, then zero them.
    ///
    /// Fails without touching any parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        for (name, t) in params.iter() {
            if let Some(g) = t.grad() {
                if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Numeric(format!(
                        "non-finite gradient in parameter '{name}' at index {i}"
                    )));
                }
            }
        }
        let t = params.step() + 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - c.beta2.powi(t.min(i32::MAX as u64) as i32);
        for (name, tensor) in params.iter_mut() {
            let Some(g) = tensor.grad().map(|g| g.to_vec()) else {
                continue;
            };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (i, p) in tensor.data_mut().iter_mut().enumerate() {
                let gi = g[i] as f64;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                let update = c.lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
                *p = (*p as f64 - update) as Float;
            }
            tensor.zero_grad();
        }
        params.set_step(t);
        Ok(())
    }
}
