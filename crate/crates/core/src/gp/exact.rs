//! Dense (exact) GP posterior, used as the reference implementation.

use super::kernel::{rq_kernel, RqKernelParams};
use super::linalg::chol_jittered;
use super::{GpError, Prediction, TrainingSet};
use crate::scalar::Scalar;
use nalgebra::DMatrix;

/// Exact GP regression at one query:
///
///   mean = k_q (K + s_n I)^-1 y
///   var  = k(q,q) - k_q (K + s_n I)^-1 k_q^T + s_n
///
/// Cost is O(n^3); this exists to validate the sparse path and for small
/// offline checks, not for the planning loop.
pub fn exact_gp_predict<S: Scalar>(
    train: &TrainingSet<S>,
    kernel: &RqKernelParams<S>,
    query: [S; 2],
) -> Result<Prediction<S>, GpError> {
    train.validate()?;
    kernel.validate()?;
    let n = train.len();
    if n == 0 {
        return Err(GpError::InvalidArgument("empty training set".into()));
    }
    let mut k = DMatrix::<S>::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rq_kernel(kernel, train.metric, train.inputs[i], train.inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += train.noise_variance;
    }
    let f = chol_jittered(&k, true)?;
    let kq = DMatrix::<S>::from_fn(n, 1, |i, _| {
        rq_kernel(kernel, train.metric, train.inputs[i], query)
    });
    let y = DMatrix::<S>::from_fn(n, 1, |i, _| train.targets[i]);

    // One triangular pair per right-hand side.
    let ly = super::linalg::solve_lower(&f.l, &y)?;
    let lk = super::linalg::solve_lower(&f.l, &kq)?;
    let mean = lk.dot(&ly);
    let prior = rq_kernel(kernel, train.metric, query, query);
    let latent = (prior - lk.dot(&lk)).max(S::zero());
    Ok(Prediction { mean, variance: latent + train.noise_variance })
}
