#![allow(dead_code)]

use fraclab_core::nn::network::{loss_and_gradients, Example, Loss, Mode, ModelParameters};
use fraclab_core::nn::{Head, NetworkConfig};
use fraclab_core::rng::SplitMix64;

/// Downsized network: conv 4/8, one BiLSTM of 8 units, inputs of length 12.
pub fn gradcheck_config(head: Head) -> NetworkConfig {
    NetworkConfig {
        conv_filters: (4, 8),
        kernel_size: 5,
        lstm_layers: 1,
        lstm_units: 8,
        dropout_rate: 0.0,
        dense_units: 20,
        head,
        input_length: 12,
    }
}

pub struct GradCheck {
    pub worst_rel: f64,
    pub worst_name: String,
    pub coordinates: usize,
    pub above_floor: usize,
}

/// Relative error used for gradient checks: `|a − n| / max(|a|, |n|, floor)`.
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

/// Central-difference step. Smaller steps are dominated by roundoff in the
/// loss, larger ones start crossing ReLU kinks.
pub const FD_STEP: f64 = 1e-5;
/// Gradient magnitudes below this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-5;

/// Compares every analytic gradient coordinate with a central difference
/// of the batch loss, perturbing one scalar at a time.
pub fn check_all_coordinates(params: &ModelParameters, batch: &[Example<'_>], loss: Loss) -> GradCheck {
    let (_, grads) = loss_and_gradients(params, batch, loss, Mode::Eval).unwrap();
    let analytic: Vec<(String, Vec<f64>)> =
        grads.named_tensors().into_iter().map(|(n, t)| (n, t.data().to_vec())).collect();
    let eval = |p: &ModelParameters| loss_and_gradients(p, batch, loss, Mode::Eval).unwrap().0;

    let mut worst_rel = 0.0;
    let mut worst_name = String::new();
    let mut coordinates = 0;
    let mut above_floor = 0;
    let mut probe = params.clone();
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for (i, &g) in grad.iter().enumerate() {
            let orig = probe.tensors_mut()[ti].data()[i];
            probe.tensors_mut()[ti].data_mut()[i] = orig + FD_STEP;
            let up = eval(&probe);
            probe.tensors_mut()[ti].data_mut()[i] = orig - FD_STEP;
            let down = eval(&probe);
            probe.tensors_mut()[ti].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let r = rel_err(g, numeric, REL_FLOOR);
            coordinates += 1;
            if g.abs() >= REL_FLOOR {
                above_floor += 1;
            }
            if r > worst_rel {
                worst_rel = r;
                worst_name = format!("{name}[{i}] analytic={} numeric={numeric}", g);
            }
        }
    }
    GradCheck { worst_rel, worst_name, coordinates, above_floor }
}

/// Three random trajectories-like inputs with targets for `head`.
pub fn random_batch(config: &NetworkConfig, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = SplitMix64::new(seed);
    let inputs = (0..3)
        .map(|_| (0..config.input_length).map(|_| rng.uniform(-0.5, 1.5)).collect())
        .collect();
    let targets = (0..3)
        .map(|i| match config.head {
            Head::Sigmoid => vec![(i % 2) as f64],
            Head::Linear { outputs } => (0..outputs).map(|_| rng.uniform(-1.0, 2.0)).collect(),
        })
        .collect();
    (inputs, targets)
}

pub fn examples<'a>(inputs: &'a [Vec<f64>], targets: &'a [Vec<f64>]) -> Vec<Example<'a>> {
    inputs.iter().zip(targets).map(|(x, y)| Example { input: x, target: y }).collect()
}
