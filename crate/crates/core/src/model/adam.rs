use super::params::ModelParams;
use super::tensor::{Mat, Scalar};
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplies the learning rate after every epoch.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: 0.999,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    pub lr: f64,
    pub step: u64,
    m: Vec<Mat<S>>,
    v: Vec<Mat<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ModelParams<S>, config: AdamConfig) -> AdamState<S> {
        let mut m = Vec::new();
        params.for_each(|_, t| m.push(t.zeros_like()));
        AdamState {
            config,
            lr: config.lr,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn end_epoch(&mut self) {
        self.lr *= self.config.decay;
    }
}

/// One bias-corrected Adam update. Refuses non-finite gradients and leaves
/// the parameters untouched in that case.
pub fn adam_step<S: Scalar>(
    state: &mut AdamState<S>,
    params: &mut ModelParams<S>,
    grads: &ModelParams<S>,
) -> Result<(), ModelError> {
    let mut g = Vec::new();
    let mut bad = None;
    grads.for_each(|name, t| {
        if bad.is_none() && !t.all_finite() {
            bad = Some(name.to_string());
        }
        g.push(t)
    });
    if let Some(name) = bad {
        return Err(ModelError::NonFiniteGradient(name));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let b1 = S::from_f64(c.beta1);
    let b2 = S::from_f64(c.beta2);
    let one = S::one();
    let bc1 = S::from_f64(1.0 - c.beta1.powi(t));
    let bc2 = S::from_f64(1.0 - c.beta2.powi(t));
    let lr = S::from_f64(state.lr);
    let eps = S::from_f64(c.eps);
    let (ms, vs) = (&mut state.m, &mut state.v);
    let mut idx = 0;
    params.for_each_mut(|_, p| {
        let (m, v, g) = (&mut ms[idx], &mut vs[idx], g[idx]);
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (one - b1) * gi;
            v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
            let mh = m.data[i] / bc1;
            let vh = v.data[i] / bc2;
            p.data[i] -= lr * mh / (vh.sqrt() + eps);
        }
        idx += 1;
    });
    Ok(())
}
