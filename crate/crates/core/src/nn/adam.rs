use ndarray::Zip;

use super::mlp::{Dense, GradBundle, Mlp};
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
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Dense>,
    pub second_moment: Vec<Dense>,
}

impl Adam {
    pub fn new(params: &Mlp, config: AdamConfig) -> Self {
        let zeros = params.zero_grads(0).layers;
        Adam {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One bias-corrected descent step: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut Mlp, grads: &GradBundle) -> Result<()> {
        let shapes_match = params.layers().len() == grads.layers.len()
            && params.layers().len() == self.first_moment.len()
            && params.layers().iter().zip(&grads.layers).zip(&self.first_moment).all(
                |((p, g), m)| {
                    p.weight.dim() == g.weight.dim()
                        && p.weight.dim() == m.weight.dim()
                        && p.bias.len() == g.bias.len()
                        && p.bias.len() == m.bias.len()
                },
            );
        if !shapes_match {
            return Err(Error::contract("optimizer, gradient and parameter shapes differ"));
        }

        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((p, g), m), v) in params
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            Zip::from(&mut p.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
