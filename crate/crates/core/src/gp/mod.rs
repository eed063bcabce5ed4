//! Gaussian process regression over 2-D direction inputs.
//!
//! The model of record is a sparse variational GP with a rational-quadratic
//! kernel, fitted by maximizing the collapsed evidence lower bound over the
//! four hyperparameters (signal variance, lengthscale, mixture parameter,
//! noise variance) with the inducing inputs held at their initialization.
//! [`exact_gp_predict`] provides the dense reference posterior used by the
//! equivalence tests. The mean function is fixed at zero throughout, which
//! is what makes prior reversion in unobserved directions meaningful.

mod elbo;
mod exact;
mod kernel;
mod linalg;
mod svgp;

pub use elbo::{elbo, elbo_grad};
pub use exact::exact_gp_predict;
pub use kernel::{rq_kernel, AngleMetric, RqKernelParams};
pub use svgp::{fit_svgp, InducingInit, OptimSettings, SgpModel};

use crate::scalar::{is_finite, Scalar};
use thiserror::Error;

/// Failure modes of the GP layer.
#[derive(Debug, Error)]
pub enum GpError {
    /// Caller handed in something structurally wrong (mismatched lengths,
    /// non-positive hyperparameters, out-of-range inducing count, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Data admits no useful fit (e.g. several identical inputs and nothing
    /// else), distinct from a caller error.
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    /// Linear algebra failed even after the jitter ladder was exhausted.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

/// Supervised data for one surface model. Inputs are (azimuth, elevation)
/// in radians; targets are whatever the surface regresses (occupancy,
/// navigability labels, ...).
#[derive(Clone, Debug)]
pub struct TrainingSet<S: Scalar> {
    pub inputs: Vec<[S; 2]>,
    pub targets: Vec<S>,
    /// Observation noise variance, strictly positive.
    pub noise_variance: S,
    /// Distance convention for the azimuth coordinate.
    pub metric: AngleMetric,
}

impl<S: Scalar> TrainingSet<S> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub(crate) fn validate(&self) -> Result<(), GpError> {
        if self.inputs.len() != self.targets.len() {
            return Err(GpError::InvalidArgument(format!(
                "{} inputs vs {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        if !(self.noise_variance > S::zero() && is_finite(self.noise_variance)) {
            return Err(GpError::InvalidArgument(
                "noise variance must be positive and finite".into(),
            ));
        }
        for (i, p) in self.inputs.iter().enumerate() {
            if !(is_finite(p[0]) && is_finite(p[1])) {
                return Err(GpError::InvalidArgument(format!("non-finite input at {i}")));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !is_finite(*t) {
                return Err(GpError::InvalidArgument(format!("non-finite target at {i}")));
            }
        }
        Ok(())
    }
}

/// Posterior at a single query: predictive mean and observation variance
/// (latent variance plus noise variance).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction<S> {
    pub mean: S,
    pub variance: S,
}
