//! Discrete fractional logistic maps with and without delay, reproducible
//! labeled corpora of their trajectories, and a small convolutional-recurrent
//! network that recovers the generating parameters from a trajectory.

pub mod analysis;
pub mod bifurcation;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod nn;
pub mod numfmt;
pub mod parallel;
pub mod pipeline;
pub mod rng;

pub use analysis::{EvaluationReport, Parameter};
pub use bifurcation::{sweep, BifurcationSweep, SweepRequest};
pub use datagen::{
    build_classification_corpora, build_corpus, pad_left, CorpusManifest, GridSpec, Split, SplitQuotas,
    TrajectoryRecord,
};
pub use dynamics::{euler_oracle, generate_delayed, generate_plain, MapKind, MapSpec, Trajectory};
pub use error::{Error, Result};
pub use kernel::{build_kernel, kernel_partial_sum, KernelTable};
