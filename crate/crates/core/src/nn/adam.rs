//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::ModelParameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParameters) -> Self {
        let sizes: Vec<usize> = params.named_tensors().iter().map(|(_, t)| t.len()).collect();
        AdamState {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// Adam update of a single flat buffer at step `t ≥ 1`.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], cfg: &AdamConfig, t: u64) {
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Advances `state.t` and applies one update to every tensor.
pub fn adam_step(params: &mut ModelParameters, grads: &ModelParameters, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let grad_tensors: Vec<_> = grads.named_tensors().into_iter().map(|(_, t)| t).collect();
    let targets = params.tensors_mut();
    if targets.len() != grad_tensors.len() || targets.len() != state.m.len() {
        return Err(Error::Shape("parameter, gradient and optimizer state layouts differ".into()));
    }
    state.t += 1;
    let t = state.t;
    for (((p, g), m), v) in targets.into_iter().zip(grad_tensors).zip(&mut state.m).zip(&mut state.v) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::Shape("tensor size differs between parameters and gradients".into()));
        }
        adam_update(p.data_mut(), g.data(), m, v, cfg, t);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::config::NetworkConfig;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let cfg = NetworkConfig { conv_filters: (2, 2), lstm_layers: 1, lstm_units: 2, dense_units: 2, input_length: 6, ..Default::default() };
        let mut p = ModelParameters::init(&cfg, 1).unwrap();
        let before = p.clone();
        let g = ModelParameters::zeros(&cfg).unwrap();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr_sign() {
        let cfg = AdamConfig::default();
        let grads = [0.3, -2.0, 1e-3];
        let mut p = [0.0; 3];
        let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
        let mut last = [0.0; 3];
        for t in 1..=10_000 {
            let before = p;
            adam_update(&mut p, &grads, &mut m, &mut v, &cfg, t);
            for i in 0..3 {
                last[i] = p[i] - before[i];
            }
        }
        for i in 0..3 {
            let expected = -cfg.lr * grads[i].signum();
            assert!((last[i] - expected).abs() < 1e-3 * cfg.lr + 1e-12, "{i}: {}", last[i]);
        }
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        let cfg = AdamConfig::default();
        let mut p = [1.0];
        adam_update(&mut p, &[5.0], &mut [0.0], &mut [0.0], &cfg, 1);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
    }
}
