//! Navigable-space modeling and local navigation built on sparse Gaussian
//! processes.
//!
//! A robot carrying a 360-degree range sensor and a forward segmentation
//! camera models the space around it as regression surfaces over spherical
//! direction coordinates:
//!
//! * an **occupancy surface** fitted to range returns (geometry),
//! * a **navigability surface** and a **depth surface** fitted to segmented
//!   camera pixels (vision).
//!
//! Candidate steering targets are extracted from the posterior variance of
//! the occupancy model (free space keeps prior variance, observed space does
//! not), scored by a goal-directed cost that blends the visual navigability
//! classification, and turned into unicycle velocity commands. The
//! [`simworld`] and [`harness`] modules provide a deterministic terrain
//! simulator and a trial/suite runner used to exercise the whole loop.
//!
//! The numerical core is generic over the scalar type (see [`scalar`]);
//! the aliases below pin the workspace default of `f64`.

pub mod gp;
pub mod harness;
pub mod planner;
pub mod scalar;
pub mod simworld;
pub mod surfaces;
pub mod vision;

pub use scalar::Scalar;

/// Workspace-default scalar for the simulation and planning layers.
pub type Real = f64;

/// Rational-quadratic kernel at the default scalar.
pub type RqKernel = gp::RqKernelParams<Real>;
/// Training set at the default scalar.
pub type TrainingSet = gp::TrainingSet<Real>;
/// Sparse GP model at the default scalar.
pub type SgpModel = gp::SgpModel<Real>;
/// Posterior prediction at the default scalar.
pub type Prediction = gp::Prediction<Real>;
