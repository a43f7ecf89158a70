use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f32>> = params
            .ids()
            .map(|id| vec![0.0; params.value(id).len()])
            .collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<(), AutodiffError> {
        if let Some(id) = params.ids().find(|&id| params.grad(id).is_none()) {
            return Err(AutodiffError::MissingGradient {
                name: params.name(id).to_string(),
            });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - f64::from(beta1).powi(t);
        let bias2 = 1.0 - f64::from(beta2).powi(t);
        // lr·m̂/(√v̂+ε) with the corrections folded into the step size.
        let step_size = (f64::from(learning_rate) * bias2.sqrt() / bias1) as f32;
        let eps_hat = (f64::from(eps) * bias2.sqrt()) as f32;

        let ids: Vec<_> = params.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let grad = params.grad(id).expect("checked above").to_vec();
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let value = params.value_mut(id).data_mut();
            for j in 0..value.len() {
                let g = grad[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                value[j] -= step_size * m[j] / (v[j].sqrt() + eps_hat);
            }
        }
        params.clear_grads();
        Ok(())
    }
}
