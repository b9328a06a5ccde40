//! LSTM cell and bidirectional layer.
//!
//! Gate pre-activations `z = W·x + U·h + b` are stacked as `[i, f, g, o]`,
//! each `H` wide: `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`,
//! `h' = o⊙tanh(c')`. No peepholes.

use crate::error::{Error, Result};

use super::layers::sigmoid;
use super::tensor::Tensor;

/// Weights of one direction: `input` is `4H × D`, `recurrent` is `4H × H`,
/// `bias` is `4H`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub input: Tensor,
    pub recurrent: Tensor,
    pub bias: Tensor,
}

impl LstmWeights {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        LstmWeights {
            input: Tensor::zeros(&[4 * units, input_dim]),
            recurrent: Tensor::zeros(&[4 * units, units]),
            bias: Tensor::zeros(&[4 * units]),
        }
    }

    pub fn units(&self) -> usize {
        self.recurrent.dim(1)
    }

    pub fn input_dim(&self) -> usize {
        self.input.dim(1)
    }

    fn check(&self) -> Result<()> {
        let h = self.units();
        let d = self.input_dim();
        self.input.expect_shape("lstm input weights", &[4 * h, d])?;
        self.recurrent.expect_shape("lstm recurrent weights", &[4 * h, h])?;
        self.bias.expect_shape("lstm bias", &[4 * h])
    }
}

/// Activations of one direction over a whole sequence, in processing order.
#[derive(Debug, Clone)]
pub(crate) struct DirectionTrace {
    /// `T × 4H` post-activation gates `[i, f, g, o]`.
    gates: Vec<f64>,
    /// `T × H` cell states.
    cells: Vec<f64>,
    /// `T × H` hidden states.
    pub hidden: Vec<f64>,
}

/// Gate activations for one step, written into `gates` (4H).
fn step_into(w: &LstmWeights, x: &[f64], h_prev: &[f64], c_prev: &[f64], gates: &mut [f64], c: &mut [f64], h: &mut [f64]) {
    let units = h_prev.len();
    let d = x.len();
    let wi = w.input.data();
    let wr = w.recurrent.data();
    let b = w.bias.data();
    for r in 0..4 * units {
        let row_i = &wi[r * d..(r + 1) * d];
        let row_r = &wr[r * units..(r + 1) * units];
        let mut z = b[r];
        for k in 0..d {
            z += row_i[k] * x[k];
        }
        for k in 0..units {
            z += row_r[k] * h_prev[k];
        }
        gates[r] = if (2 * units..3 * units).contains(&r) { z.tanh() } else { sigmoid(z) };
    }
    for k in 0..units {
        let (i, f, g, o) = (gates[k], gates[units + k], gates[2 * units + k], gates[3 * units + k]);
        c[k] = f * c_prev[k] + i * g;
        h[k] = o * c[k].tanh();
    }
}

/// One LSTM step.
pub fn lstm_cell_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], w: &LstmWeights) -> Result<(Vec<f64>, Vec<f64>)> {
    w.check()?;
    let units = w.units();
    if x.len() != w.input_dim() || h_prev.len() != units || c_prev.len() != units {
        return Err(Error::Shape(format!(
            "lstm step: x {} (want {}), h {} and c {} (want {units})",
            x.len(),
            w.input_dim(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut gates = vec![0.0; 4 * units];
    let mut c = vec![0.0; units];
    let mut h = vec![0.0; units];
    step_into(w, x, h_prev, c_prev, &mut gates, &mut c, &mut h);
    Ok((h, c))
}

/// Runs one direction over `inputs` (`T × D`, already in processing order)
/// from zero initial state.
pub(crate) fn run_direction(w: &LstmWeights, inputs: &[f64], steps: usize) -> DirectionTrace {
    let h = w.units();
    let d = w.input_dim();
    let mut gates = vec![0.0; steps * 4 * h];
    let mut cells = vec![0.0; steps * h];
    let mut hidden = vec![0.0; steps * h];
    let zeros = vec![0.0; h];
    for s in 0..steps {
        let (c_done, c_rest) = cells.split_at_mut(s * h);
        let (h_done, h_rest) = hidden.split_at_mut(s * h);
        let (h_prev, c_prev) = if s == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (&h_done[(s - 1) * h..], &c_done[(s - 1) * h..])
        };
        step_into(
            w,
            &inputs[s * d..(s + 1) * d],
            h_prev,
            c_prev,
            &mut gates[s * 4 * h..(s + 1) * 4 * h],
            &mut c_rest[..h],
            &mut h_rest[..h],
        );
    }
    DirectionTrace { gates, cells, hidden }
}

/// Backpropagation through time for one direction. `d_hidden` is the
/// external gradient on each step's hidden output (`T × H`, processing
/// order). Accumulates into `grads` and returns the input gradient `T × D`.
pub(crate) fn backward_direction(
    w: &LstmWeights,
    inputs: &[f64],
    steps: usize,
    trace: &DirectionTrace,
    d_hidden: &[f64],
    grads: &mut LstmWeights,
) -> Vec<f64> {
    let h = w.units();
    let d = w.input_dim();
    let wi = w.input.data();
    let wr = w.recurrent.data();
    let mut d_inputs = vec![0.0; steps * d];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let zeros = vec![0.0; h];

    for s in (0..steps).rev() {
        let gates = &trace.gates[s * 4 * h..(s + 1) * 4 * h];
        let c = &trace.cells[s * h..(s + 1) * h];
        let (h_prev, c_prev) = if s == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (&trace.hidden[(s - 1) * h..s * h], &trace.cells[(s - 1) * h..s * h])
        };
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = c[k].tanh();
            let dh = d_hidden[s * h + k] + dh_next[k];
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dz[k] = dc * g * i * (1.0 - i);
            dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * h + k] = dc * i * (1.0 - g * g);
            dz[3 * h + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }

        let x = &inputs[s * d..(s + 1) * d];
        let dx = &mut d_inputs[s * d..(s + 1) * d];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let gwi = grads.input.data_mut();
        for r in 0..4 * h {
            let g = dz[r];
            if g == 0.0 {
                continue;
            }
            let row = &wi[r * d..(r + 1) * d];
            let grow = &mut gwi[r * d..(r + 1) * d];
            for k in 0..d {
                grow[k] += g * x[k];
                dx[k] += g * row[k];
            }
        }
        let gwr = grads.recurrent.data_mut();
        for r in 0..4 * h {
            let g = dz[r];
            if g == 0.0 {
                continue;
            }
            let row = &wr[r * h..(r + 1) * h];
            let grow = &mut gwr[r * h..(r + 1) * h];
            for k in 0..h {
                grow[k] += g * h_prev[k];
                dh_next[k] += g * row[k];
            }
        }
        let gb = grads.bias.data_mut();
        for r in 0..4 * h {
            gb[r] += dz[r];
        }
    }
    d_inputs
}

/// Both directions of one bidirectional layer.
pub(crate) struct BiTrace {
    pub forward: DirectionTrace,
    pub backward: DirectionTrace,
    /// Input reversed in time, as seen by the backward direction.
    pub reversed_input: Vec<f64>,
}

pub(crate) fn reverse_steps(seq: &[f64], steps: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(seq.len());
    for t in (0..steps).rev() {
        out.extend_from_slice(&seq[t * width..(t + 1) * width]);
    }
    out
}

pub(crate) fn run_bidirectional(fwd: &LstmWeights, bwd: &LstmWeights, input: &[f64], steps: usize) -> BiTrace {
    let width = fwd.input_dim();
    let reversed_input = reverse_steps(input, steps, width);
    BiTrace {
        forward: run_direction(fwd, input, steps),
        backward: run_direction(bwd, &reversed_input, steps),
        reversed_input,
    }
}

impl BiTrace {
    /// Per-step output `T × 2H`: `[h_fwd(t), h_bwd(t)]` in time order.
    pub fn sequence(&self, steps: usize, units: usize) -> Vec<f64> {
        let mut out = vec![0.0; steps * 2 * units];
        for t in 0..steps {
            let row = &mut out[t * 2 * units..(t + 1) * 2 * units];
            row[..units].copy_from_slice(&self.forward.hidden[t * units..(t + 1) * units]);
            let s = steps - 1 - t;
            row[units..].copy_from_slice(&self.backward.hidden[s * units..(s + 1) * units]);
        }
        out
    }

    /// Final forward state concatenated with the final backward state
    /// (the latter sits at time 0).
    pub fn summary(&self, steps: usize, units: usize) -> Vec<f64> {
        let last = (steps - 1) * units..steps * units;
        let mut out = self.forward.hidden[last.clone()].to_vec();
        out.extend_from_slice(&self.backward.hidden[last]);
        out
    }
}

/// Bidirectional LSTM over a `T × D` sequence, returning `T × 2H`.
pub fn bilstm_layer(sequence: &Tensor, fwd: &LstmWeights, bwd: &LstmWeights) -> Result<Tensor> {
    fwd.check()?;
    bwd.check()?;
    if sequence.shape().len() != 2 || sequence.dim(1) != fwd.input_dim() || fwd.input.shape() != bwd.input.shape() {
        return Err(Error::Shape(format!(
            "bilstm: sequence {:?}, forward input weights {:?}, backward {:?}",
            sequence.shape(),
            fwd.input.shape(),
            bwd.input.shape()
        )));
    }
    let steps = sequence.dim(0);
    let units = fwd.units();
    let trace = run_bidirectional(fwd, bwd, sequence.data(), steps);
    Tensor::new(vec![steps, 2 * units], trace.sequence(steps, units))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_weights(d: usize, h: usize, seed: u64, scale: f64) -> LstmWeights {
        let mut rng = SplitMix64::new(seed);
        let mut w = LstmWeights::zeros(d, h);
        for t in [&mut w.input, &mut w.recurrent, &mut w.bias] {
            t.data_mut().iter_mut().for_each(|v| *v = rng.uniform(-scale, scale));
        }
        w
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let w = LstmWeights::zeros(3, 4);
        let (h, c) = lstm_cell_step(&[1.0, -2.0, 0.5], &[0.3; 4], &[0.0; 4], &w).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(c, vec![0.0; 4]);
    }

    #[test]
    fn saturated_gates_carry_memory() {
        let h = 2;
        let mut w = LstmWeights::zeros(1, h);
        let b = w.bias.data_mut();
        for k in 0..h {
            b[k] = -1e3; // input gate closed
            b[h + k] = 1e3; // forget gate open
        }
        let c_prev = [0.7, -0.4];
        let (_, c) = lstm_cell_step(&[5.0], &[0.1, 0.2], &c_prev, &w).unwrap();
        assert_eq!(c, c_prev.to_vec());
    }

    #[test]
    fn step_shape_errors() {
        let w = LstmWeights::zeros(3, 4);
        assert!(lstm_cell_step(&[1.0], &[0.0; 4], &[0.0; 4], &w).is_err());
        assert!(lstm_cell_step(&[1.0; 3], &[0.0; 3], &[0.0; 4], &w).is_err());
    }

    #[test]
    fn bilstm_width_is_twice_units() {
        let fwd = random_weights(64, 32, 1, 0.1);
        let bwd = random_weights(64, 32, 2, 0.1);
        let seq = Tensor::from_fn(&[50, 64], |i| (i as f64 * 0.01).sin());
        assert_eq!(bilstm_layer(&seq, &fwd, &bwd).unwrap().shape(), &[50, 64]);
    }

    #[test]
    fn palindrome_with_tied_weights_is_mirror_symmetric() {
        let w = random_weights(2, 5, 9, 0.5);
        let steps = 7;
        let half = [[0.1, -0.3], [0.5, 0.2], [-0.7, 0.9], [0.4, 0.4]];
        let mut data = Vec::new();
        for t in 0..steps {
            let idx = if t < 4 { t } else { steps - 1 - t };
            data.extend_from_slice(&half[idx]);
        }
        let seq = Tensor::new(vec![steps, 2], data).unwrap();
        let out = bilstm_layer(&seq, &w, &w).unwrap();
        let h = 5;
        for t in 0..steps {
            let fwd = &out.data()[t * 2 * h..t * 2 * h + h];
            let m = steps - 1 - t;
            let bwd = &out.data()[m * 2 * h + h..(m + 1) * 2 * h];
            assert_eq!(fwd, bwd);
        }
    }

    /// Directional derivative of a scalar readout through a full sequence,
    /// analytic vs central differences.
    #[test]
    fn direction_jvp_matches_finite_differences() {
        let (d, h, steps) = (3, 4, 6);
        let w = random_weights(d, h, 17, 0.6);
        let mut rng = SplitMix64::new(5);
        let input: Vec<f64> = (0..steps * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let readout: Vec<f64> = (0..steps * h).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let objective = |w: &LstmWeights, x: &[f64]| -> f64 {
            let tr = run_direction(w, x, steps);
            tr.hidden.iter().zip(&readout).map(|(a, b)| a * b).sum()
        };

        let trace = run_direction(&w, &input, steps);
        let mut grads = LstmWeights::zeros(d, h);
        let dx = backward_direction(&w, &input, steps, &trace, &readout, &mut grads);

        // random direction over all weights and inputs
        let dir_w = random_weights(d, h, 99, 1.0);
        let dir_x: Vec<f64> = (0..steps * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let analytic: f64 = [(&grads.input, &dir_w.input), (&grads.recurrent, &dir_w.recurrent), (&grads.bias, &dir_w.bias)]
            .iter()
            .map(|(g, v)| g.data().iter().zip(v.data()).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            + dx.iter().zip(&dir_x).map(|(a, b)| a * b).sum::<f64>();

        let eps = 1e-6;
        let shifted = |sign: f64| {
            let mut w2 = w.clone();
            for (t, v) in [(&mut w2.input, &dir_w.input), (&mut w2.recurrent, &dir_w.recurrent), (&mut w2.bias, &dir_w.bias)] {
                t.data_mut().iter_mut().zip(v.data()).for_each(|(a, b)| *a += sign * eps * b);
            }
            let x2: Vec<f64> = input.iter().zip(&dir_x).map(|(a, b)| a + sign * eps * b).collect();
            objective(&w2, &x2)
        };
        let numeric = (shifted(1.0) - shifted(-1.0)) / (2.0 * eps);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(rel < 1e-6, "analytic {analytic} numeric {numeric} rel {rel}");
    }
}
