//! The full conv → conv → BiLSTM stack → dense → head network.
//!
//! Input is a single-channel sequence of `input_length` values. Two
//! same-padded convolutions with ReLU extract features; each bidirectional
//! LSTM layer is followed by dropout; the last layer is summarised by its
//! final forward and backward states; a ReLU dense layer feeds the head.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

use super::config::{Head, NetworkConfig};
use super::layers::{conv1d_backward, conv1d_raw, dense_backward, dense_raw, dropout_mask, sigmoid};
use super::lstm::{backward_direction, reverse_steps, run_bidirectional, BiTrace, LstmWeights};
use super::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmWeights,
    pub backward: LstmWeights,
}

/// Every trainable tensor plus the dropout generator state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub config: NetworkConfig,
    pub conv1_kernel: Tensor,
    pub conv1_bias: Tensor,
    pub conv2_kernel: Tensor,
    pub conv2_bias: Tensor,
    pub lstm: Vec<BiLstmParams>,
    pub dense_weight: Tensor,
    pub dense_bias: Tensor,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    pub rng_state: u64,
}

/// Loss minimised during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Mean absolute error, averaged over outputs and samples.
    Mae,
    /// Binary cross-entropy on the sigmoid head's logit.
    Bce,
}

/// Whether dropout is active, and with which per-batch seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.uniform(-limit, limit))
}

impl ModelParameters {
    /// All-zero parameters with the right shapes.
    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        config.validate()?;
        let (c1, c2) = config.conv_filters;
        let k = config.kernel_size;
        let h = config.lstm_units;
        let mut lstm = Vec::with_capacity(config.lstm_layers);
        let mut input = c2;
        for _ in 0..config.lstm_layers {
            lstm.push(BiLstmParams { forward: LstmWeights::zeros(input, h), backward: LstmWeights::zeros(input, h) });
            input = 2 * h;
        }
        let out = config.head.outputs();
        Ok(ModelParameters {
            config: *config,
            conv1_kernel: Tensor::zeros(&[c1, 1, k]),
            conv1_bias: Tensor::zeros(&[c1]),
            conv2_kernel: Tensor::zeros(&[c2, c1, k]),
            conv2_bias: Tensor::zeros(&[c2]),
            lstm,
            dense_weight: Tensor::zeros(&[config.dense_units, 2 * h]),
            dense_bias: Tensor::zeros(&[config.dense_units]),
            head_weight: Tensor::zeros(&[out, config.dense_units]),
            head_bias: Tensor::zeros(&[out]),
            rng_state: 0,
        })
    }

    /// Glorot-uniform weights, zero biases except LSTM forget gates (1).
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = SplitMix64::new(seed);
        let (c1, c2) = config.conv_filters;
        let k = config.kernel_size;
        let h = config.lstm_units;
        p.conv1_kernel = glorot(&[c1, 1, k], k, c1 * k, &mut rng);
        p.conv2_kernel = glorot(&[c2, c1, k], c1 * k, c2 * k, &mut rng);
        for layer in &mut p.lstm {
            for dir in [&mut layer.forward, &mut layer.backward] {
                let d = dir.input_dim();
                dir.input = glorot(&[4 * h, d], d, 4 * h, &mut rng);
                dir.recurrent = glorot(&[4 * h, h], h, 4 * h, &mut rng);
                dir.bias.data_mut()[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
            }
        }
        p.dense_weight = glorot(&[config.dense_units, 2 * h], 2 * h, config.dense_units, &mut rng);
        let out = config.head.outputs();
        p.head_weight = glorot(&[out, config.dense_units], config.dense_units, out, &mut rng);
        p.rng_state = rng.next_u64();
        Ok(p)
    }

    /// Tensors in canonical order with their checkpoint names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = vec![
            ("conv1.kernel".into(), &self.conv1_kernel),
            ("conv1.bias".into(), &self.conv1_bias),
            ("conv2.kernel".into(), &self.conv2_kernel),
            ("conv2.bias".into(), &self.conv2_bias),
        ];
        for (l, layer) in self.lstm.iter().enumerate() {
            for (dname, dir) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                v.push((format!("lstm{l}.{dname}.input"), &dir.input));
                v.push((format!("lstm{l}.{dname}.recurrent"), &dir.recurrent));
                v.push((format!("lstm{l}.{dname}.bias"), &dir.bias));
            }
        }
        v.push(("dense.weight".into(), &self.dense_weight));
        v.push(("dense.bias".into(), &self.dense_bias));
        v.push(("head.weight".into(), &self.head_weight));
        v.push(("head.bias".into(), &self.head_bias));
        v
    }

    /// Mutable tensors in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.conv1_kernel, &mut self.conv1_bias, &mut self.conv2_kernel, &mut self.conv2_bias];
        for layer in &mut self.lstm {
            for dir in [&mut layer.forward, &mut layer.backward] {
                v.push(&mut dir.input);
                v.push(&mut dir.recurrent);
                v.push(&mut dir.bias);
            }
        }
        v.extend([&mut self.dense_weight, &mut self.dense_bias, &mut self.head_weight, &mut self.head_bias]);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn add_assign(&mut self, other: &ModelParameters) {
        let src: Vec<&Tensor> = other.named_tensors().into_iter().map(|(_, t)| t).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            dst.data_mut().iter_mut().zip(s.data()).for_each(|(a, b)| *a += b);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Checks every tensor's shape against the config.
    pub fn check_shapes(&self) -> Result<()> {
        let reference = Self::zeros(&self.config)?;
        let want = reference.named_tensors();
        let have = self.named_tensors();
        if want.len() != have.len() {
            return Err(Error::Shape(format!("expected {} tensors, found {}", want.len(), have.len())));
        }
        for ((name, w), (_, h)) in want.iter().zip(&have) {
            h.expect_shape(name, w.shape())?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Forward with cache

struct LayerCache {
    input: Vec<f64>,
    trace: BiTrace,
    mask: Option<Vec<f64>>,
}

struct ForwardCache {
    input: Vec<f64>,
    conv1: Vec<f64>,
    conv2: Vec<f64>,
    layers: Vec<LayerCache>,
    summary: Vec<f64>,
    dense: Vec<f64>,
    /// Head pre-activation (logit for the sigmoid head).
    logits: Vec<f64>,
}

fn apply_mask(values: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        values.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
}

fn forward_cached(p: &ModelParameters, input: &[f64], mode: Mode) -> Result<ForwardCache> {
    let cfg = &p.config;
    let steps = cfg.input_length;
    if input.len() != steps {
        return Err(Error::Shape(format!("input of length {} but network expects {steps}", input.len())));
    }
    let k = cfg.kernel_size;
    let (c1, c2) = cfg.conv_filters;
    let h = cfg.lstm_units;

    let mut conv1 = conv1d_raw(input, steps, 1, p.conv1_kernel.data(), p.conv1_bias.data(), k);
    conv1.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut conv2 = conv1d_raw(&conv1, steps, c1, p.conv2_kernel.data(), p.conv2_bias.data(), k);
    conv2.iter_mut().for_each(|v| *v = v.max(0.0));
    debug_assert_eq!(conv2.len(), steps * c2);

    let mut rng = match mode {
        Mode::Train { seed } if cfg.dropout_rate > 0.0 => Some(SplitMix64::new(seed)),
        _ => None,
    };
    let mut layers = Vec::with_capacity(p.lstm.len());
    let mut current = conv2.clone();
    let mut summary = Vec::new();
    for (l, layer) in p.lstm.iter().enumerate() {
        let trace = run_bidirectional(&layer.forward, &layer.backward, &current, steps);
        let last = l + 1 == p.lstm.len();
        let mut out = if last { trace.summary(steps, h) } else { trace.sequence(steps, h) };
        let mask = rng.as_mut().map(|r| dropout_mask(out.len(), cfg.dropout_rate, r));
        apply_mask(&mut out, &mask);
        layers.push(LayerCache { input: std::mem::take(&mut current), trace, mask });
        if last {
            summary = out;
        } else {
            current = out;
        }
    }

    let mut dense = dense_raw(&summary, p.dense_weight.data(), p.dense_bias.data());
    dense.iter_mut().for_each(|v| *v = v.max(0.0));
    let logits = dense_raw(&dense, p.head_weight.data(), p.head_bias.data());
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    Ok(ForwardCache { input: input.to_vec(), conv1, conv2, layers, summary, dense, logits })
}

fn head_output(head: Head, logits: &[f64]) -> Vec<f64> {
    match head {
        Head::Linear { .. } => logits.to_vec(),
        Head::Sigmoid => logits.iter().map(|&z| sigmoid(z)).collect(),
    }
}

/// Evaluation-mode prediction for one padded trajectory: the regressed
/// value(s) for a linear head, a probability for the sigmoid head.
pub fn forward(params: &ModelParameters, padded: &[f64]) -> Result<Vec<f64>> {
    forward_mode(params, padded, Mode::Eval)
}

pub fn forward_mode(params: &ModelParameters, padded: &[f64], mode: Mode) -> Result<Vec<f64>> {
    let cache = forward_cached(params, padded, mode)?;
    Ok(head_output(params.config.head, &cache.logits))
}

/// Evaluation-mode predictions for many inputs, in input order.
pub fn predict_many(params: &ModelParameters, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    inputs.par_iter().map(|x| forward(params, x)).collect()
}

// ---------------------------------------------------------------------------
// Backward

fn backward(p: &ModelParameters, cache: &ForwardCache, d_logits: &[f64], grads: &mut ModelParameters) {
    let cfg = &p.config;
    let steps = cfg.input_length;
    let k = cfg.kernel_size;
    let (c1, c2) = cfg.conv_filters;
    let h = cfg.lstm_units;

    let d_dense = dense_backward(&cache.dense, p.head_weight.data(), d_logits, grads.head_weight.data_mut(), grads.head_bias.data_mut());
    let d_dense_pre: Vec<f64> = d_dense.iter().zip(&cache.dense).map(|(g, &o)| if o > 0.0 { *g } else { 0.0 }).collect();
    let mut d_out = dense_backward(&cache.summary, p.dense_weight.data(), &d_dense_pre, grads.dense_weight.data_mut(), grads.dense_bias.data_mut());

    for l in (0..p.lstm.len()).rev() {
        let lc = &cache.layers[l];
        let weights = &p.lstm[l];
        let layer_grads = &mut grads.lstm[l];
        apply_mask(&mut d_out, &lc.mask);
        let last = l + 1 == p.lstm.len();

        // hidden-state gradients per direction, in processing order
        let mut dh_f = vec![0.0; steps * h];
        let mut dh_b = vec![0.0; steps * h];
        if last {
            dh_f[(steps - 1) * h..].copy_from_slice(&d_out[..h]);
            dh_b[(steps - 1) * h..].copy_from_slice(&d_out[h..]);
        } else {
            for t in 0..steps {
                let row = &d_out[t * 2 * h..(t + 1) * 2 * h];
                dh_f[t * h..(t + 1) * h].copy_from_slice(&row[..h]);
                let s = steps - 1 - t;
                dh_b[s * h..(s + 1) * h].copy_from_slice(&row[h..]);
            }
        }
        let width = weights.forward.input_dim();
        let dx_f = backward_direction(&weights.forward, &lc.input, steps, &lc.trace.forward, &dh_f, &mut layer_grads.forward);
        let dx_b = backward_direction(&weights.backward, &lc.trace.reversed_input, steps, &lc.trace.backward, &dh_b, &mut layer_grads.backward);
        let dx_b = reverse_steps(&dx_b, steps, width);
        d_out = dx_f.iter().zip(&dx_b).map(|(a, b)| a + b).collect();
    }

    let d_conv2: Vec<f64> = d_out.iter().zip(&cache.conv2).map(|(g, &o)| if o > 0.0 { *g } else { 0.0 }).collect();
    let d_conv1 = conv1d_backward(&cache.conv1, steps, c1, p.conv2_kernel.data(), k, &d_conv2, grads.conv2_kernel.data_mut(), grads.conv2_bias.data_mut(), true)
        .expect("input gradient requested");
    debug_assert_eq!(d_conv2.len(), steps * c2);
    let d_conv1: Vec<f64> = d_conv1.iter().zip(&cache.conv1).map(|(g, &o)| if o > 0.0 { *g } else { 0.0 }).collect();
    conv1d_backward(&cache.input, steps, 1, p.conv1_kernel.data(), k, &d_conv1, grads.conv1_kernel.data_mut(), grads.conv1_bias.data_mut(), false);
}

/// Numerically stable `-[y ln σ(z) + (1-y) ln(1-σ(z))]`.
pub fn bce_with_logit(z: f64, target: f64) -> f64 {
    z.max(0.0) - z * target + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a probability against a 0/1 target.
pub fn bce(prob: f64, target: f64) -> f64 {
    let p = prob.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

pub fn mae(predictions: &[f64], targets: &[f64]) -> f64 {
    predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / predictions.len() as f64
}

/// Per-sample loss and the gradient with respect to the head pre-activation.
fn sample_loss(head: Head, loss: Loss, logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if target.len() != logits.len() {
        return Err(Error::Shape(format!("target has {} values, head emits {}", target.len(), logits.len())));
    }
    match (loss, head) {
        (Loss::Mae, Head::Linear { .. }) => {
            let n = logits.len() as f64;
            let value = mae(logits, target);
            let grad = logits
                .iter()
                .zip(target)
                .map(|(p, t)| {
                    let d = p - t;
                    if d > 0.0 {
                        1.0 / n
                    } else if d < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok((value, grad))
        }
        (Loss::Bce, Head::Sigmoid) => {
            let z = logits[0];
            Ok((bce_with_logit(z, target[0]), vec![sigmoid(z) - target[0]]))
        }
        (Loss::Mae, Head::Sigmoid) => Err(Error::Config("MAE loss needs a linear head".into())),
        (Loss::Bce, Head::Linear { .. }) => Err(Error::Config("BCE loss needs a sigmoid head".into())),
    }
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub input: &'a [f64],
    pub target: &'a [f64],
}

/// Samples per reduction chunk; partial sums are combined in chunk order so
/// results do not depend on the thread count.
const CHUNK: usize = 8;

/// Mean loss over `batch` and its gradient with respect to every parameter.
/// In [`Mode::Train`], sample `i` uses dropout seed `derive_seed(seed, [i])`.
pub fn loss_and_gradients(params: &ModelParameters, batch: &[Example<'_>], loss: Loss, mode: Mode) -> Result<(f64, ModelParameters)> {
    if batch.is_empty() {
        return Err(Error::Insufficient("empty batch".into()));
    }
    let partials = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| -> Result<(f64, ModelParameters)> {
            let mut grads = ModelParameters::zeros(&params.config)?;
            let mut total = 0.0;
            for (j, ex) in chunk.iter().enumerate() {
                let sample_mode = match mode {
                    Mode::Eval => Mode::Eval,
                    Mode::Train { seed } => Mode::Train { seed: derive_seed(seed, &[(ci * CHUNK + j) as u64]) },
                };
                let cache = forward_cached(params, ex.input, sample_mode)?;
                let (value, d_logits) = sample_loss(params.config.head, loss, &cache.logits, ex.target)?;
                total += value;
                backward(params, &cache, &d_logits, &mut grads);
            }
            Ok((total, grads))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut iter = partials.into_iter();
    let (mut total, mut grads) = iter.next().expect("non-empty batch");
    for (t, g) in iter {
        total += t;
        grads.add_assign(&g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    let value = total / n;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    Ok((value, grads))
}

/// Mean loss without gradients, evaluation mode.
pub fn evaluate_loss(params: &ModelParameters, batch: &[Example<'_>], loss: Loss) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Insufficient("empty batch".into()));
    }
    let losses = batch
        .par_iter()
        .map(|ex| {
            let cache = forward_cached(params, ex.input, Mode::Eval)?;
            Ok(sample_loss(params.config.head, loss, &cache.logits, ex.target)?.0)
        })
        .collect::<Result<Vec<f64>>>()?;
    let value = losses.iter().sum::<f64>() / losses.len() as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(head: Head) -> NetworkConfig {
        NetworkConfig {
            conv_filters: (3, 4),
            kernel_size: 3,
            lstm_layers: 2,
            lstm_units: 3,
            dropout_rate: 0.1,
            dense_units: 5,
            head,
            input_length: 9,
        }
    }

    #[test]
    fn zero_parameters() {
        let x = vec![0.3; 50];
        let mut cfg = NetworkConfig { head: Head::Sigmoid, ..Default::default() };
        let p = ModelParameters::zeros(&cfg).unwrap();
        assert_eq!(forward(&p, &x).unwrap(), vec![0.5]);
        cfg.head = Head::Linear { outputs: 1 };
        let p = ModelParameters::zeros(&cfg).unwrap();
        assert_eq!(forward(&p, &x).unwrap(), vec![0.0]);
    }

    #[test]
    fn default_parameter_count() {
        // conv 192 + 10304, three BiLSTM layers of 24832, dense 1300, head 21
        let cfg = NetworkConfig::default();
        assert_eq!(cfg.parameter_count(), 86_313);
        assert_eq!(ModelParameters::zeros(&cfg).unwrap().parameter_count(), 86_313);
    }

    #[test]
    fn eval_is_deterministic_and_train_mode_varies() {
        let cfg = small(Head::Linear { outputs: 2 });
        let p = ModelParameters::init(&cfg, 3).unwrap();
        let x: Vec<f64> = (0..9).map(|i| i as f64 * 0.1).collect();
        let a = forward(&p, &x).unwrap();
        let b = forward(&p, &x).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        let t1 = forward_mode(&p, &x, Mode::Train { seed: 1 }).unwrap();
        let t2 = forward_mode(&p, &x, Mode::Train { seed: 2 }).unwrap();
        assert_ne!(t1, t2);
    }

    #[test]
    fn input_length_mismatch() {
        let p = ModelParameters::init(&small(Head::Sigmoid), 1).unwrap();
        assert!(matches!(forward(&p, &[0.0; 8]), Err(Error::Shape(_))));
    }

    #[test]
    fn losses() {
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_with_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((bce_with_logit(-3.0, 0.0) - bce(sigmoid(-3.0), 0.0)).abs() < 1e-12);
    }

    #[test]
    fn mae_loss_zero_when_exact() {
        let cfg = small(Head::Linear { outputs: 1 });
        let p = ModelParameters::init(&cfg, 11).unwrap();
        let x = vec![0.2; 9];
        let pred = forward(&p, &x).unwrap();
        let (l, g) = loss_and_gradients(&p, &[Example { input: &x, target: &pred }], Loss::Mae, Mode::Eval).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.named_tensors().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn loss_head_mismatch_rejected() {
        let p = ModelParameters::init(&small(Head::Sigmoid), 1).unwrap();
        let x = vec![0.0; 9];
        assert!(loss_and_gradients(&p, &[Example { input: &x, target: &[1.0] }], Loss::Mae, Mode::Eval).is_err());
        assert!(loss_and_gradients(&p, &[], Loss::Bce, Mode::Eval).is_err());
    }

    #[test]
    fn gradients_independent_of_thread_count() {
        let cfg = small(Head::Linear { outputs: 1 });
        let p = ModelParameters::init(&cfg, 4).unwrap();
        let inputs: Vec<Vec<f64>> = (0..37).map(|i| (0..9).map(|t| ((i * 9 + t) as f64 * 0.3).sin()).collect()).collect();
        let targets: Vec<[f64; 1]> = (0..37).map(|i| [i as f64 / 37.0]).collect();
        let batch: Vec<Example> = inputs.iter().zip(&targets).map(|(x, y)| Example { input: x, target: y }).collect();
        let run = |n| {
            crate::parallel::with_workers(Some(n), || loss_and_gradients(&p, &batch, Loss::Mae, Mode::Train { seed: 8 }).unwrap()).unwrap()
        };
        let (l1, g1) = run(1);
        let (l4, g4) = run(4);
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert_eq!(g1, g4);
    }
}
