//! Gaussian-process machinery over a finite set of locations.
//!
//! Every location of the environment carries one random variable. The joint
//! prior is zero-mean with squared-exponential covariance plus a small nugget
//! `jitter = nugget * s²` on the diagonal, which keeps every covariance block
//! positive definite and stands in for observation noise.

mod fit;
mod info;
mod kernel;
mod model;
mod sample;

use thiserror::Error;

pub use fit::{fit_hyperparams, log_marginal_likelihood, Bounds, FitOptions, FitResult};
pub use info::{mutual_information, mutual_information_symmetric};
pub use kernel::{squared_distance, Kernel, Point};
pub use model::{GpModel, Posterior, DEFAULT_NUGGET};
pub use sample::{sample_environment, EnvField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("kernel parameters must be positive and finite (signal={signal}, length_scale={length_scale})")]
    InvalidKernel { signal: f64, length_scale: f64 },
    #[error("location id {0} is out of range")]
    UnknownLocation(usize),
    #[error("location {0} appears more than once in the evidence set")]
    DuplicateEvidence(usize),
    #[error("{sensed} sensed locations but {observations} observations")]
    EvidenceLength { sensed: usize, observations: usize },
    #[error("covariance matrix is not positive definite; raise the jitter")]
    IllConditioned,
    #[error("candidate {0} is already part of the placed set")]
    CandidateAlreadyPlaced(usize),
    #[error("at least {needed} measurements at distinct locations are required, got {got}")]
    TooFewMeasurements { needed: usize, got: usize },
    #[error("invalid fitting bounds: {0}")]
    InvalidBounds(String),
    #[error("empty target set")]
    NoTargets,
}
