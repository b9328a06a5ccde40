//! Evenly spaced parameter grids with decimal-clean values.

use crate::error::{Error, Result};

/// Number of points `⌊(hi − lo)/step⌋ + 1`, tolerant to representation error
/// in the quotient.
pub fn grid_len(lo: f64, hi: f64, step: f64) -> Result<usize> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
        return Err(Error::Config("grid bounds and step must be finite".into()));
    }
    if step <= 0.0 {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    if lo > hi {
        return Err(Error::Config(format!("grid lower bound {lo} exceeds upper bound {hi}")));
    }
    Ok(((hi - lo) / step + 1e-9).floor() as usize + 1)
}

/// The `i`-th grid value, snapped to the nearest double of its 10-decimal
/// rendering so that `0.001 * 3` reads back as `0.003`.
pub fn grid_value(lo: f64, step: f64, i: usize) -> f64 {
    let raw = lo + i as f64 * step;
    format!("{raw:.10}").parse().expect("formatted float parses")
}

pub fn grid_values(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    let n = grid_len(lo, hi, step)?;
    Ok((0..n).map(|i| grid_value(lo, step, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_grid_sizes() {
        assert_eq!(grid_len(0.0, 2.0, 0.001).unwrap(), 2001);
        assert_eq!(grid_len(0.01, 1.0, 0.01).unwrap(), 100);
        assert_eq!(grid_len(2.0, 3.2, 0.001).unwrap(), 1201);
        assert_eq!(grid_len(0.1, 0.9, 0.1).unwrap(), 9);
        assert_eq!(grid_len(0.5, 0.5, 0.1).unwrap(), 1);
    }

    #[test]
    fn values_are_decimal_clean() {
        let v = grid_values(0.0, 2.0, 0.001).unwrap();
        assert_eq!(v[3], 0.003);
        assert_eq!(v[2000], 2.0);
        let v = grid_values(0.01, 1.0, 0.01).unwrap();
        assert_eq!(v[99], 1.0);
        assert_eq!(v[6], 0.07);
    }

    #[test]
    fn invalid_grids() {
        assert!(grid_len(1.0, 0.0, 0.1).is_err());
        assert!(grid_len(0.0, 1.0, 0.0).is_err());
        assert!(grid_len(0.0, 1.0, -0.1).is_err());
    }
}
