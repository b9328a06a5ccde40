//! Cesàro numbers of order ν, the memory kernel of the fractional logistic map.
//!
//! The gamma ratio Γ(n−j+ν)/Γ(n−j+1) in the convolution sum equals
//! Γ(ν)·k^ν(n−j), so the prefactor μ/Γ(ν) collapses to μ and only the
//! normalised weights k^ν(j) = Γ(ν+j)/(Γ(ν)Γ(j+1)) are needed. They are built
//! with the multiplicative recurrence k(j+1) = k(j)·(ν+j)/(j+1), which never
//! evaluates a gamma function and so cannot overflow.

use crate::error::{Error, Result};

/// Precomputed weights `k^ν(0..=horizon)` for a single ν.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    nu: f64,
    weights: Vec<f64>,
}

/// Rejects ν outside (0, 1].
pub fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Domain(format!("nu must lie in (0, 1], got {nu}")));
    }
    Ok(())
}

/// Builds the kernel table for `nu` with entries `0..=horizon`.
pub fn build_kernel(nu: f64, horizon: usize) -> Result<KernelTable> {
    check_nu(nu)?;
    let mut weights = Vec::with_capacity(horizon + 1);
    let mut w = 1.0_f64;
    weights.push(w);
    for j in 0..horizon {
        let jf = j as f64;
        w = w * (nu + jf) / (jf + 1.0);
        weights.push(w);
    }
    Ok(KernelTable { nu, weights })
}

/// Same as [`build_kernel`] but takes a signed horizon, as exposed on the
/// command line.
pub fn build_kernel_signed(nu: f64, horizon: i64) -> Result<KernelTable> {
    if horizon < 0 {
        return Err(Error::Domain(format!("horizon must be non-negative, got {horizon}")));
    }
    build_kernel(nu, horizon as usize)
}

/// Σ_{j=0}^{n} k^ν(j). Equals k^{ν+1}(n).
pub fn kernel_partial_sum(table: &KernelTable, n: usize) -> Result<f64> {
    if n > table.horizon() {
        return Err(Error::Range(format!(
            "partial sum index {n} exceeds kernel horizon {}",
            table.horizon()
        )));
    }
    Ok(table.weights[..=n].iter().sum())
}

impl KernelTable {
    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn horizon(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }
}
