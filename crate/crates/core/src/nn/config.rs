use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output layer of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Head {
    /// Linear regression of one value (μ or ν) or two (μ and ν jointly).
    Linear { outputs: usize },
    /// Probability that the trajectory comes from the delayed map.
    Sigmoid,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Linear { outputs } => outputs,
            Head::Sigmoid => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub conv_filters: (usize, usize),
    pub kernel_size: usize,
    pub lstm_layers: usize,
    pub lstm_units: usize,
    pub dropout_rate: f64,
    pub dense_units: usize,
    pub head: Head,
    pub input_length: usize,
}

impl Default for NetworkConfig {
    /// Two convolutions of 32 and 64 filters (width 5), three bidirectional
    /// LSTMs of 32 units with 10% dropout, a 20-unit dense layer and a single
    /// linear output, over inputs of length 50.
    fn default() -> Self {
        NetworkConfig {
            conv_filters: (32, 64),
            kernel_size: 5,
            lstm_layers: 3,
            lstm_units: 32,
            dropout_rate: 0.10,
            dense_units: 20,
            head: Head::Linear { outputs: 1 },
            input_length: 50,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("conv_filters.0", self.conv_filters.0),
            ("conv_filters.1", self.conv_filters.1),
            ("kernel_size", self.kernel_size),
            ("lstm_layers", self.lstm_layers),
            ("lstm_units", self.lstm_units),
            ("dense_units", self.dense_units),
            ("input_length", self.input_length),
            ("head outputs", self.head.outputs()),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.head.outputs() > 2 {
            return Err(Error::Config("linear head supports 1 or 2 outputs".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let (c1, c2) = self.conv_filters;
        let k = self.kernel_size;
        let h = self.lstm_units;
        let conv = (k * c1 + c1) + (k * c1 * c2 + c2);
        let mut lstm = 0;
        let mut input = c2;
        for _ in 0..self.lstm_layers {
            lstm += 2 * (4 * h * input + 4 * h * h + 4 * h);
            input = 2 * h;
        }
        let dense = 2 * h * self.dense_units + self.dense_units;
        let head = self.dense_units * self.head.outputs() + self.head.outputs();
        conv + lstm + dense + head
    }
}
