//! Rational-quadratic kernel on (azimuth, elevation) inputs.

use super::GpError;
use crate::scalar::{c, is_finite, Scalar};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// How the azimuth coordinate measures distance.
///
/// The occupancy model covers a full turn, so its azimuth difference wraps
/// around +-pi; the camera-limited models never straddle the seam and use
/// the plain difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AngleMetric {
    Plain,
    WrapAzimuth,
}

impl AngleMetric {
    /// Squared input distance under this metric.
    #[inline]
    pub fn sq_dist<S: Scalar>(self, a: [S; 2], b: [S; 2]) -> S {
        let mut da = (a[0] - b[0]).abs();
        if let AngleMetric::WrapAzimuth = self {
            let tau = S::two_pi();
            da %= tau;
            if da < S::zero() {
                da += tau;
            }
            let other = tau - da;
            if other < da {
                da = other;
            }
        }
        let db = a[1] - b[1];
        da * da + db * db
    }
}

/// Hyperparameters of k(a, b) = sig2 * (1 + r^2 / (2 * alpha * ell^2))^(-alpha).
///
/// All three are strictly positive. `alpha` controls the scale mixture;
/// alpha -> inf recovers the squared exponential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RqKernelParams<S> {
    pub signal_variance: S,
    pub lengthscale: S,
    pub alpha: S,
}

impl<S: Scalar> RqKernelParams<S> {
    pub(crate) fn validate(&self) -> Result<(), GpError> {
        for (name, v) in [
            ("signal_variance", self.signal_variance),
            ("lengthscale", self.lengthscale),
            ("alpha", self.alpha),
        ] {
            if !(v > S::zero() && is_finite(v)) {
                return Err(GpError::InvalidArgument(format!(
                    "kernel {name} must be positive and finite"
                )));
            }
        }
        Ok(())
    }

    /// Kernel value together with the dimensionless s = r^2/(2 alpha ell^2),
    /// which the bound gradients reuse.
    #[inline]
    pub(crate) fn eval_with_s(&self, r2: S) -> (S, S) {
        let s = r2 / (c::<S>(2.0) * self.alpha * self.lengthscale * self.lengthscale);
        let k = self.signal_variance * (S::one() + s).powf(-self.alpha);
        (k, s)
    }
}

/// Kernel evaluation between two direction inputs.
pub fn rq_kernel<S: Scalar>(
    params: &RqKernelParams<S>,
    metric: AngleMetric,
    a: [S; 2],
    b: [S; 2],
) -> S {
    params.eval_with_s(metric.sq_dist(a, b)).0
}

/// Cross-covariance matrix (rows over `rows_pts`, columns over `col_pts`)
/// plus the matching matrix of s values.
pub(crate) fn cross_gram<S: Scalar>(
    params: &RqKernelParams<S>,
    metric: AngleMetric,
    rows_pts: &[[S; 2]],
    col_pts: &[[S; 2]],
) -> (DMatrix<S>, DMatrix<S>) {
    let (m, n) = (rows_pts.len(), col_pts.len());
    let mut k = DMatrix::<S>::zeros(m, n);
    let mut s = DMatrix::<S>::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            let (kv, sv) = params.eval_with_s(metric.sq_dist(rows_pts[i], col_pts[j]));
            k[(i, j)] = kv;
            s[(i, j)] = sv;
        }
    }
    (k, s)
}

/// Symmetric Gram matrix over one point set (mirrored upper half).
pub(crate) fn sym_gram<S: Scalar>(
    params: &RqKernelParams<S>,
    metric: AngleMetric,
    pts: &[[S; 2]],
) -> (DMatrix<S>, DMatrix<S>) {
    let m = pts.len();
    let mut k = DMatrix::<S>::zeros(m, m);
    let mut s = DMatrix::<S>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let (kv, sv) = params.eval_with_s(metric.sq_dist(pts[i], pts[j]));
            k[(i, j)] = kv;
            k[(j, i)] = kv;
            s[(i, j)] = sv;
            s[(j, i)] = sv;
        }
    }
    (k, s)
}
