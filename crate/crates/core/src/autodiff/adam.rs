use serde::{Deserialize, Serialize};

use super::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
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

/// Adam moment estimates for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first: ParamStore<f32>,
    pub second: ParamStore<f32>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            first: ParamStore::new(),
            second: ParamStore::new(),
        }
    }

    /// One update of every tensor that has a gradient in `grads`.
    pub fn update(&mut self, params: &mut ParamStore<f32>, grads: &ParamStore<f32>) {
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let step_size = (c.lr * bc2.sqrt() / bc1) as f32;
        let (b1, b2, eps) = (c.beta1 as f32, c.beta2 as f32, (c.eps * bc2.sqrt()) as f32);
        for (name, g) in grads.iter() {
            let Some(p) = params.get_mut(name) else { continue };
            if self.first.get(name).is_none() {
                self.first.insert(name.clone(), ndarray::Array2::zeros(g.dim()));
                self.second.insert(name.clone(), ndarray::Array2::zeros(g.dim()));
            }
            let m = self.first.get_mut(name).unwrap();
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| *m = b1 * *m + (1.0 - b1) * g);
            let v = self.second.get_mut(name).unwrap();
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            let m = self.first.get(name).unwrap();
            let v = self.second.get(name).unwrap();
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .for_each(|p, &m, &v| *p -= step_size * m / (v.sqrt() + eps));
        }
    }
}
