//! Trajectories of the fractional logistic map and its delayed variant.
//!
//! Both maps share the convolution form
//!
//! ```text
//! x(n) = x(0) + μ · Σ_{j=1}^{n} k^ν(n−j) · x(j−1) · (1 − y(j−1))
//! ```
//!
//! with `y = x` for the plain map and `y(0) = y0`, `y(m) = x(m−1)` for the
//! delayed one. Generation stops as soon as a candidate value leaves
//! `[-1, 3]`; the offending value is dropped and the trajectory is flagged
//! as truncated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{build_kernel, check_nu, KernelTable};

/// Lower bound of admissible trajectory values.
pub const LOWER_BOUND: f64 = -1.0;
/// Upper bound of admissible trajectory values.
pub const UPPER_BOUND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Plain,
    Delayed,
}

impl MapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::Plain => "plain",
            MapKind::Delayed => "delayed",
        }
    }

    /// Classification label: delayed = 1, plain = 0.
    pub fn label(self) -> f64 {
        match self {
            MapKind::Plain => 0.0,
            MapKind::Delayed => 1.0,
        }
    }
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(MapKind::Plain),
            "delayed" => Ok(MapKind::Delayed),
            other => Err(Error::Config(format!("unknown map kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for MapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of one map instance. `y0` is ignored for [`MapKind::Plain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub kind: MapKind,
    pub mu: f64,
    pub nu: f64,
    pub x0: f64,
    pub y0: f64,
}

impl MapSpec {
    pub fn plain(mu: f64, nu: f64, x0: f64) -> Self {
        MapSpec { kind: MapKind::Plain, mu, nu, x0, y0: x0 }
    }

    pub fn delayed(mu: f64, nu: f64, x0: f64, y0: f64) -> Self {
        MapSpec { kind: MapKind::Delayed, mu, nu, x0, y0 }
    }

    /// Delayed or plain spec with the delayed channel starting at `x0`.
    pub fn new(kind: MapKind, mu: f64, nu: f64, x0: f64) -> Self {
        MapSpec { kind, mu, nu, x0, y0: x0 }
    }

    fn validate(&self) -> Result<()> {
        check_nu(self.nu)?;
        if !self.mu.is_finite() {
            return Err(Error::Domain(format!("mu must be finite, got {}", self.mu)));
        }
        for (name, v) in [("x0", self.x0), ("y0", self.y0)] {
            if !in_bounds(v) {
                return Err(Error::Domain(format!(
                    "{name} must lie in [{LOWER_BOUND}, {UPPER_BOUND}], got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub values: Vec<f64>,
    /// Set when the divergence guard stopped generation early.
    pub truncated: bool,
    pub spec: MapSpec,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[inline]
pub fn in_bounds(v: f64) -> bool {
    (LOWER_BOUND..=UPPER_BOUND).contains(&v)
}

/// Generates up to `n_steps` values of the map described by `spec`, reusing a
/// precomputed kernel whose horizon must cover `n_steps - 1`.
pub fn generate_with_kernel(spec: &MapSpec, kernel: &KernelTable, n_steps: usize) -> Result<Trajectory> {
    spec.validate()?;
    if n_steps == 0 {
        return Err(Error::Domain("n_steps must be at least 1".into()));
    }
    if kernel.nu() != spec.nu {
        return Err(Error::Domain(format!(
            "kernel built for nu={} used with nu={}",
            kernel.nu(),
            spec.nu
        )));
    }
    if kernel.horizon() + 1 < n_steps {
        return Err(Error::Range(format!(
            "kernel horizon {} too short for {n_steps} steps",
            kernel.horizon()
        )));
    }

    let weights = kernel.weights();
    let mut values = Vec::with_capacity(n_steps);
    // terms[j-1] = x(j-1) * (1 - y(j-1))
    let mut terms = Vec::with_capacity(n_steps);
    values.push(spec.x0);
    let mut truncated = false;

    for n in 1..n_steps {
        let prev = values[n - 1];
        let delayed = match spec.kind {
            MapKind::Plain => prev,
            MapKind::Delayed if n == 1 => spec.y0,
            MapKind::Delayed => values[n - 2],
        };
        terms.push(prev * (1.0 - delayed));

        let mut acc = 0.0;
        for j in 1..=n {
            acc += weights[n - j] * terms[j - 1];
        }
        let next = spec.x0 + spec.mu * acc;
        if !in_bounds(next) {
            truncated = true;
            break;
        }
        values.push(next);
    }

    Ok(Trajectory { values, truncated, spec: *spec })
}

/// Generates a trajectory, building the kernel on the fly.
pub fn generate(spec: &MapSpec, n_steps: usize) -> Result<Trajectory> {
    let kernel = build_kernel(spec.nu, n_steps.saturating_sub(1))?;
    generate_with_kernel(spec, &kernel, n_steps)
}

pub fn generate_plain(mu: f64, nu: f64, x0: f64, n_steps: usize) -> Result<Trajectory> {
    generate(&MapSpec::plain(mu, nu, x0), n_steps)
}

pub fn generate_delayed(mu: f64, nu: f64, x0: f64, y0: f64, n_steps: usize) -> Result<Trajectory> {
    generate(&MapSpec::delayed(mu, nu, x0, y0), n_steps)
}

/// Memoryless reference for ν = 1, iterated incrementally:
/// `x(n+1) = x(n) + μ x(n)(1 − x(n))` or, delayed, `x(n+1) = x(n) + μ x(n)(1 − x(n−1))`.
///
/// Applies the same `[-1, 3]` guard as the convolution generator.
pub fn euler_oracle(kind: MapKind, mu: f64, x0: f64, y0: f64, n_steps: usize) -> Result<Trajectory> {
    let spec = MapSpec { kind, mu, nu: 1.0, x0, y0 };
    spec.validate()?;
    if n_steps == 0 {
        return Err(Error::Domain("n_steps must be at least 1".into()));
    }
    let mut values = vec![x0];
    let mut lagged = y0;
    let mut truncated = false;
    while values.len() < n_steps {
        let x = *values.last().unwrap();
        let y = match kind {
            MapKind::Plain => x,
            MapKind::Delayed => lagged,
        };
        let next = x + mu * x * (1.0 - y);
        if !next.is_finite() || !in_bounds(next) {
            truncated = true;
            break;
        }
        lagged = x;
        values.push(next);
    }
    Ok(Trajectory { values, truncated, spec })
}
