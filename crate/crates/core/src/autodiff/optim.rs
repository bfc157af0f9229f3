use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{ParameterSet, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adaptive-moment optimizer state. Moments are created lazily the first
/// time a parameter is updated.
#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<T>>,
    second: BTreeMap<String, Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, name: &str) -> Option<(&[T], &[T])> {
        Some((self.first.get(name)?, self.second.get(name)?))
    }

    /// Applies one update to every unfrozen parameter. Fails without touching
    /// anything if an unfrozen parameter has no gradient.
    pub fn step(&mut self, params: &mut ParameterSet<T>) -> Result<()> {
        if let Some((name, _)) = params
            .iter()
            .find(|(_, p)| !p.frozen && p.value.grad().is_none())
        {
            return Err(Error::MissingGrad(name.clone()));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let wd = T::from_f64(c.weight_decay);
        for (name, p) in params.iter_mut() {
            if p.frozen {
                continue;
            }
            let n = p.value.numel();
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); n]);
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); n]);
            let grad = p.value.grad().expect("checked above").to_vec();
            let values = p.value.data_mut();
            for i in 0..n {
                let gi = grad[i] + wd * values[i];
                m[i] = b1 * m[i] + one_b1 * gi;
                v[i] = b2 * v[i] + one_b2 * gi * gi;
                let m_hat = m[i].to_f64() / bias1;
                let v_hat = v[i].to_f64() / bias2;
                let update = c.lr * m_hat / (v_hat.sqrt() + c.eps);
                values[i] = values[i] - T::from_f64(update);
            }
        }
        Ok(())
    }
}
