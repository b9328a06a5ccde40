//! Feigenbaum diagram data: for each μ on a grid, run the map for `n_total`
//! steps and keep the tail of `n_keep` values.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{generate_with_kernel, MapKind, MapSpec};
use crate::error::{Error, Result};
use crate::grid::grid_values;
use crate::kernel::build_kernel;
use crate::numfmt::g17;

pub const DEFAULT_TOTAL: usize = 200;
pub const DEFAULT_KEEP: usize = 100;

/// Retained tail for one μ. Truncated trajectories contribute whatever tail
/// they have, so `kept_count` may be below `n_keep`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationColumn {
    pub mu: f64,
    pub truncated: bool,
    pub kept_count: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationSweep {
    pub kind: MapKind,
    pub nu: f64,
    pub x0: f64,
    pub n_total: usize,
    pub n_keep: usize,
    pub columns: Vec<BifurcationColumn>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepRequest {
    pub kind: MapKind,
    pub nu: f64,
    pub x0: f64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub mu_step: f64,
    pub n_total: usize,
    pub n_keep: usize,
}

pub fn sweep(req: &SweepRequest) -> Result<BifurcationSweep> {
    if req.n_keep > req.n_total {
        return Err(Error::Config(format!(
            "n_keep ({}) must not exceed n_total ({})",
            req.n_keep, req.n_total
        )));
    }
    if req.n_total == 0 {
        return Err(Error::Config("n_total must be at least 1".into()));
    }
    let mus = grid_values(req.mu_lo, req.mu_hi, req.mu_step)?;
    let kernel = build_kernel(req.nu, req.n_total - 1)?;

    let columns = mus
        .par_iter()
        .map(|&mu| {
            let spec = MapSpec::new(req.kind, mu, req.nu, req.x0);
            let traj = generate_with_kernel(&spec, &kernel, req.n_total)?;
            let start = traj.len().saturating_sub(req.n_keep);
            let values = traj.values[start..].to_vec();
            Ok(BifurcationColumn { mu, truncated: traj.truncated, kept_count: values.len(), values })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BifurcationSweep {
        kind: req.kind,
        nu: req.nu,
        x0: req.x0,
        n_total: req.n_total,
        n_keep: req.n_keep,
        columns,
    })
}

impl BifurcationSweep {
    pub fn point_count(&self) -> usize {
        self.columns.iter().map(|c| c.kept_count).sum()
    }

    /// `(mu, value)` pairs ordered by μ, then by time index.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.columns.iter().flat_map(|c| c.values.iter().map(move |&v| (c.mu, v)))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mu,value")?;
        for (mu, v) in self.points() {
            writeln!(out, "{},{}", g17(mu), g17(v))?;
        }
        Ok(())
    }
}
