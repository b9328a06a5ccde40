//! Convolution, dense and dropout layers with their backward passes.
//!
//! Sequences are stored time-major: a `T × C` buffer holds channel `c` of
//! step `t` at `t * C + c`.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Linear,
    Sigmoid,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::ReLU => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative with respect to the pre-activation, given the activation output.
    #[inline]
    pub fn derivative(self, out: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

// ---------------------------------------------------------------------------
// 1-D convolution, same-length output, zero padding of ⌊k/2⌋ on both sides

/// Pre-activation of a same-padded convolution.
/// `kernels` is `filters × in_ch × k`, `input` is `T × in_ch`, output `T × filters`.
pub(crate) fn conv1d_raw(input: &[f64], steps: usize, in_ch: usize, kernels: &[f64], bias: &[f64], k: usize) -> Vec<f64> {
    let filters = bias.len();
    let pad = k / 2;
    let mut out = vec![0.0; steps * filters];
    for t in 0..steps {
        let row = &mut out[t * filters..(t + 1) * filters];
        row.copy_from_slice(bias);
        for tap in 0..k {
            let src = t + tap;
            if src < pad || src - pad >= steps {
                continue;
            }
            let x = &input[(src - pad) * in_ch..(src - pad + 1) * in_ch];
            for (f, acc) in row.iter_mut().enumerate() {
                let w = &kernels[f * in_ch * k..(f + 1) * in_ch * k];
                let mut s = 0.0;
                for c in 0..in_ch {
                    s += w[c * k + tap] * x[c];
                }
                *acc += s;
            }
        }
    }
    out
}

/// Accumulates kernel and bias gradients from `d_pre` (`T × filters`) and,
/// when requested, returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    input: &[f64],
    steps: usize,
    in_ch: usize,
    kernels: &[f64],
    k: usize,
    d_pre: &[f64],
    d_kernels: &mut [f64],
    d_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let filters = d_bias.len();
    let pad = k / 2;
    let mut d_input = want_input_grad.then(|| vec![0.0; steps * in_ch]);
    for t in 0..steps {
        let g = &d_pre[t * filters..(t + 1) * filters];
        for (f, &gf) in g.iter().enumerate() {
            d_bias[f] += gf;
        }
        for tap in 0..k {
            let src = t + tap;
            if src < pad || src - pad >= steps {
                continue;
            }
            let s = src - pad;
            let x = &input[s * in_ch..(s + 1) * in_ch];
            for (f, &gf) in g.iter().enumerate() {
                if gf == 0.0 {
                    continue;
                }
                let base = f * in_ch * k;
                for c in 0..in_ch {
                    d_kernels[base + c * k + tap] += gf * x[c];
                }
                if let Some(dx) = d_input.as_mut() {
                    for c in 0..in_ch {
                        dx[s * in_ch + c] += gf * kernels[base + c * k + tap];
                    }
                }
            }
        }
    }
    d_input
}

/// Same-length 1-D convolution followed by ReLU.
///
/// `input` is `T × C`, `kernels` is `filters × C × k`, `bias` has `filters`
/// entries; the result is `T × filters`.
pub fn conv1d_forward(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.shape().len() != 2 || kernels.shape().len() != 3 || bias.shape().len() != 1 {
        return Err(Error::Shape("conv1d expects input T×C, kernels F×C×K, bias F".into()));
    }
    let (steps, in_ch) = (input.dim(0), input.dim(1));
    let (filters, k_in, k) = (kernels.dim(0), kernels.dim(1), kernels.dim(2));
    if steps == 0 {
        return Err(Error::Shape("conv1d input must have at least one step".into()));
    }
    if k_in != in_ch || bias.dim(0) != filters {
        return Err(Error::Shape(format!(
            "conv1d: input has {in_ch} channels, kernels {:?}, bias {:?}",
            kernels.shape(),
            bias.shape()
        )));
    }
    let mut out = conv1d_raw(input.data(), steps, in_ch, kernels.data(), bias.data(), k);
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    Tensor::new(vec![steps, filters], out)
}

// ---------------------------------------------------------------------------
// Dense

/// `weights` is `out × in`.
pub(crate) fn dense_raw(input: &[f64], weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let w = &weights[o * n_in..(o + 1) * n_in];
            b + w.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
        })
        .collect()
}

/// Accumulates gradients of a dense layer given the pre-activation gradient.
pub(crate) fn dense_backward(
    input: &[f64],
    weights: &[f64],
    d_pre: &[f64],
    d_weights: &mut [f64],
    d_bias: &mut [f64],
) -> Vec<f64> {
    let n_in = input.len();
    let mut d_input = vec![0.0; n_in];
    for (o, &g) in d_pre.iter().enumerate() {
        d_bias[o] += g;
        let w = &weights[o * n_in..(o + 1) * n_in];
        let dw = &mut d_weights[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            dw[i] += g * input[i];
            d_input[i] += g * w[i];
        }
    }
    d_input
}

/// Affine map `W·x + b` followed by `activation`. `weights` is `out × in`.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor, activation: Activation) -> Result<Tensor> {
    if weights.shape().len() != 2 || bias.shape().len() != 1 {
        return Err(Error::Shape("dense expects weights out×in and bias out".into()));
    }
    let (n_out, n_in) = (weights.dim(0), weights.dim(1));
    if input.len() != n_in || bias.dim(0) != n_out {
        return Err(Error::Shape(format!(
            "dense: input of {} values, weights {:?}, bias {:?}",
            input.len(),
            weights.shape(),
            bias.shape()
        )));
    }
    let out = dense_raw(input.data(), weights.data(), bias.data())
        .into_iter()
        .map(|z| activation.apply(z))
        .collect();
    Tensor::new(vec![n_out], out)
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1/(1-rate)`.
pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut SplitMix64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.next_f64() < rate { 0.0 } else { keep }).collect()
}

/// Inverted dropout. Identity when not training or when `rate` is 0.
pub fn dropout(input: &Tensor, rate: f64, training: bool, rng: &mut SplitMix64) -> Tensor {
    if !training || rate == 0.0 {
        return input.clone();
    }
    let mask = dropout_mask(input.len(), rate, rng);
    let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_output_shape() {
        let x = Tensor::from_fn(&[50, 1], |i| (i as f64 * 0.1).sin());
        let k = Tensor::from_fn(&[32, 1, 5], |i| (i as f64 * 0.37).cos() * 0.1);
        let b = Tensor::zeros(&[32]);
        assert_eq!(conv1d_forward(&x, &k, &b).unwrap().shape(), &[50, 32]);
    }

    #[test]
    fn conv_zero_input() {
        let x = Tensor::zeros(&[20, 3]);
        let k = Tensor::from_fn(&[4, 3, 5], |i| i as f64 - 7.0);
        let out = conv1d_forward(&x, &k, &Tensor::zeros(&[4])).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::column(&[1.0; 12]);
        let k = Tensor::new(vec![1, 1, 5], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let out = conv1d_forward(&x, &k, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn conv_shape_mismatch() {
        let x = Tensor::zeros(&[10, 2]);
        let k = Tensor::zeros(&[4, 3, 5]);
        assert!(matches!(conv1d_forward(&x, &k, &Tensor::zeros(&[4])), Err(Error::Shape(_))));
        let x = Tensor::zeros(&[0, 3]);
        assert!(conv1d_forward(&x, &k, &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn conv_edges_see_zero_padding() {
        // kernel [1,1,1,1,1] sums a window of five, clipped at the borders
        let x = Tensor::column(&[1.0; 6]);
        let k = Tensor::new(vec![1, 1, 5], vec![1.0; 5]).unwrap();
        let out = conv1d_forward(&x, &k, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0, 5.0, 5.0, 4.0, 3.0]);
    }

    #[test]
    fn dense_cases() {
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        let out = dense(&x, &Tensor::zeros(&[1, 3]), &Tensor::zeros(&[1]), Activation::Sigmoid).unwrap();
        assert_eq!(out.data(), &[0.5]);
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let out = dense(&x, &eye, &Tensor::zeros(&[3]), Activation::Linear).unwrap();
        assert_eq!(out.data(), x.data());
        let out = dense(&x, &eye, &Tensor::zeros(&[3]), Activation::ReLU).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0, 3.0]);
        assert!(dense(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2]), Activation::Linear).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::from_fn(&[100], |i| i as f64);
        let mut rng = SplitMix64::new(1);
        assert_eq!(dropout(&x, 0.0, true, &mut rng), x);
        assert_eq!(dropout(&x, 0.5, false, &mut rng), x);
    }

    #[test]
    fn dropout_rate_concentration() {
        let x = Tensor::from_fn(&[100_000], |_| 1.0);
        let mut rng = SplitMix64::new(2024);
        let out = dropout(&x, 0.1, true, &mut rng);
        let zeroed = out.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((zeroed - 0.1).abs() < 0.005, "{zeroed}");
        let kept = out.data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((kept - 1.0 / 0.9).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
