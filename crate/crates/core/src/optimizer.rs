//! Adam, used for gradient *ascent* on the variational bound.

use serde::{Deserialize, Serialize};

use crate::checkpoint::codec;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::objective::Gradients;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    /// First moments, one array per entry of [`ModelParams::arrays`].
    #[serde(with = "codec::nested")]
    pub m: Vec<Vec<f64>>,
    #[serde(with = "codec::nested")]
    pub v: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.001, 0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    /// Moments are allocated on the first step.
    pub fn new(alpha: f64, beta1: f64, beta2: f64, eps_hat: f64) -> Self {
        Self {
            step: 0,
            alpha,
            beta1,
            beta2,
            eps_hat,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One ascent step over parallel lists of parameter and gradient arrays.
    pub fn step_arrays(&mut self, mut params: Vec<&mut [f64]>, grads: Vec<&[f64]>) -> Result<()> {
        if params.len() != grads.len()
            || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len())
        {
            return Err(Error::shape("adam_step", "gradients congruent with parameters", "different layout"));
        }
        if let Some(i) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite {
                array: format!("gradient array #{i}"),
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len() || self.m.iter().zip(&params).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::shape("adam_step", "moments congruent with parameters", "different layout"));
        }

        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, alpha, eps) = (self.beta1, self.beta2, self.alpha, self.eps_hat);

        for (((p, g), m), v) in params.iter_mut().zip(&grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] += alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Moves `params` along the ascent direction `grads`. Tied matrices are a
/// single array in both, so they are updated exactly once.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFinite {
            array: format!("gradient {name}"),
        });
    }
    let g: Vec<&[f64]> = grads.arrays().into_iter().map(|(_, a)| a).collect();
    let p: Vec<&mut [f64]> = params.arrays_mut().into_iter().map(|(_, a)| a).collect();
    state.step_arrays(p, g)
}
