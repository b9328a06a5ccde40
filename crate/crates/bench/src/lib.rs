//! Shared fixtures for the benchmarks.

use fraclab_core::nn::{Head, NetworkConfig};
use fraclab_core::rng::SplitMix64;

/// The reduced network used for desk-scale runs.
pub fn desk_network(head: Head) -> NetworkConfig {
    NetworkConfig { conv_filters: (8, 16), lstm_layers: 1, lstm_units: 16, head, ..NetworkConfig::default() }
}

/// `n` inputs of length `len` with values in [0, 1).
pub fn random_inputs(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| (0..len).map(|_| rng.next_f64()).collect()).collect()
}
