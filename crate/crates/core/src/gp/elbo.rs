//! Collapsed evidence lower bound and its hyperparameter gradients.
//!
//! With inducing inputs Z fixed, the variational posterior over inducing
//! outputs has a closed form and the bound collapses to
//!
//!   F = log N(y | 0, Q_nn + s_n I) - tr(K_nn - Q_nn) / (2 s_n),
//!   Q_nn = K_nm K_mm^-1 K_mn.
//!
//! Everything is evaluated through the standard factorization
//!   A = L^-1 K_mn / s,   B = I + A A^T,   L L^T = K_mm + jitter I,
//! which keeps every product at O(m^2 n) and never forms an n x n matrix.
//! Gradients are taken in the four log hyperparameters
//! (log sig2, log ell, log alpha, log noise), in that order.

use super::kernel::{cross_gram, sym_gram, RqKernelParams};
use super::linalg::{chol_jittered, solve_lower, solve_lower_tr};
use super::{GpError, TrainingSet};
use crate::scalar::{c, is_finite, Scalar};
use nalgebra::{DMatrix, DVector};

/// Shared factorization state; also reused to assemble the fitted model.
pub(crate) struct Collapse<S: Scalar> {
    pub l: DMatrix<S>,
    pub jitter: f64,
    pub a: DMatrix<S>,
    pub b_l: DMatrix<S>,
    pub ay: DVector<S>,
    pub c_vec: DVector<S>,
    pub kmn: DMatrix<S>,
    pub smn: DMatrix<S>,
    pub kmm0: DMatrix<S>,
    pub smm: DMatrix<S>,
    pub y: DVector<S>,
    pub y_sq: S,
    pub a_fro2: S,
}

fn validate_inducing<S: Scalar>(inducing: &[[S; 2]]) -> Result<(), GpError> {
    if inducing.is_empty() {
        return Err(GpError::InvalidArgument("no inducing inputs".into()));
    }
    for (i, p) in inducing.iter().enumerate() {
        if !(is_finite(p[0]) && is_finite(p[1])) {
            return Err(GpError::InvalidArgument(format!(
                "non-finite inducing input at {i}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn collapse<S: Scalar>(
    train: &TrainingSet<S>,
    kernel: &RqKernelParams<S>,
    inducing: &[[S; 2]],
) -> Result<Collapse<S>, GpError> {
    let noise = train.noise_variance;
    let sigma = noise.sqrt();
    let (kmm0, smm) = sym_gram(kernel, train.metric, inducing);
    let (kmn, smn) = cross_gram(kernel, train.metric, inducing, train.inputs.as_slice());
    let fact = chol_jittered(&kmm0, false)?;
    let mut a = solve_lower(&fact.l, &kmn)?;
    a /= sigma;
    let m = inducing.len();
    let mut b = &a * a.transpose();
    for i in 0..m {
        b[(i, i)] += S::one();
    }
    let b_l = nalgebra::linalg::Cholesky::new(b)
        .ok_or_else(|| GpError::NumericalFailure("inner system lost positivity".into()))?
        .unpack();
    let y = DVector::<S>::from_fn(train.len(), |i, _| train.targets[i]);
    let ay = &a * &y;
    let c_mat = solve_lower(&b_l, &DMatrix::from_column_slice(m, 1, ay.as_slice()))?;
    let c_vec = DVector::from_column_slice(c_mat.as_slice()) / sigma;
    let y_sq = y.dot(&y);
    let a_fro2 = a.dot(&a);
    Ok(Collapse {
        l: fact.l,
        jitter: fact.jitter,
        a,
        b_l,
        ay,
        c_vec,
        kmn,
        smn,
        kmm0,
        smm,
        y,
        y_sq,
        a_fro2,
    })
}

fn bound_value<S: Scalar>(cl: &Collapse<S>, train: &TrainingSet<S>, sig2: S) -> S {
    let n = c::<S>(train.len() as f64);
    let noise = train.noise_variance;
    let half = c::<S>(0.5);
    let mut logdet_b = S::zero();
    for i in 0..cl.b_l.nrows() {
        logdet_b += cl.b_l[(i, i)].ln();
    }
    let trace_term = n * sig2 - noise * cl.a_fro2;
    -half * n * c::<S>(std::f64::consts::TAU).ln() - logdet_b - half * n * noise.ln()
        - half * cl.y_sq / noise
        + half * cl.c_vec.dot(&cl.c_vec)
        - half * trace_term / noise
}

/// Value of the collapsed bound at the given hyperparameters.
pub fn elbo<S: Scalar>(
    train: &TrainingSet<S>,
    kernel: &RqKernelParams<S>,
    inducing: &[[S; 2]],
) -> Result<S, GpError> {
    train.validate()?;
    kernel.validate()?;
    validate_inducing(inducing)?;
    if train.is_empty() {
        return Err(GpError::InvalidArgument("empty training set".into()));
    }
    let cl = collapse(train, kernel, inducing)?;
    Ok(bound_value(&cl, train, kernel.signal_variance))
}

/// Elementwise derivative factors: dK/dparam = K .* factor(s).
#[inline]
fn factor_ell<S: Scalar>(alpha: S, s: S) -> S {
    c::<S>(2.0) * alpha * s / (S::one() + s)
}

#[inline]
fn factor_alpha<S: Scalar>(alpha: S, s: S) -> S {
    alpha * (s / (S::one() + s) - (S::one() + s).ln())
}

/// Bound value and gradient in the four log hyperparameters
/// `[log sig2, log ell, log alpha, log noise]`.
pub fn elbo_grad<S: Scalar>(
    train: &TrainingSet<S>,
    kernel: &RqKernelParams<S>,
    inducing: &[[S; 2]],
) -> Result<(S, [S; 4]), GpError> {
    train.validate()?;
    kernel.validate()?;
    validate_inducing(inducing)?;
    if train.is_empty() {
        return Err(GpError::InvalidArgument("empty training set".into()));
    }
    let cl = collapse(train, kernel, inducing)?;
    let f = bound_value(&cl, train, kernel.signal_variance);

    let n = train.len();
    let m = inducing.len();
    let nf = c::<S>(n as f64);
    let sig2 = kernel.signal_variance;
    let noise = train.noise_variance;
    let sigma = noise.sqrt();
    let half = c::<S>(0.5);
    let two = c::<S>(2.0);

    // r = Q^-1 y = (y - A^T B^-1 A y) / noise
    let ay_m = DMatrix::from_column_slice(m, 1, cl.ay.as_slice());
    let b_beta = solve_lower_tr(&cl.b_l, &solve_lower(&cl.b_l, &ay_m)?)?;
    let b_beta = DVector::from_column_slice(b_beta.as_slice());
    let r = (&cl.y - cl.a.transpose() * &b_beta) / noise;
    let r_sq = r.dot(&r);

    // G = sigma * L^-T A, and the parameter-independent m x m helpers.
    let g_mat = solve_lower_tr(&cl.l, &cl.a)? * sigma;
    let g_r = &g_mat * &r;
    // P = G A^T = sigma L^-T (A A^T), and G G^T = sigma P L^-1.
    let b_minus_i = &cl.a * cl.a.transpose();
    let p_mat = solve_lower_tr(&cl.l, &b_minus_i)? * sigma;
    let gg = solve_lower_tr(&cl.l, &p_mat.transpose())?.transpose() * sigma;
    let eye = DMatrix::<S>::identity(m, m);
    let b_inv = solve_lower_tr(&cl.b_l, &solve_lower(&cl.b_l, &eye)?)?;
    let tr_b_inv = b_inv.diagonal().sum();
    let trace_term = nf * sig2 - noise * cl.a_fro2;

    let mut grad = [S::zero(); 4];
    for (idx, which) in [0usize, 1, 2].into_iter().enumerate() {
        // dK = K .* E for each kernel hyperparameter.
        let e = |s: S| -> S {
            match which {
                0 => S::one(),
                1 => factor_ell(kernel.alpha, s),
                _ => factor_alpha(kernel.alpha, s),
            }
        };
        let dkmn = DMatrix::from_fn(m, n, |i, j| cl.kmn[(i, j)] * e(cl.smn[(i, j)]));
        let dkmm = DMatrix::from_fn(m, m, |i, j| cl.kmm0[(i, j)] * e(cl.smm[(i, j)]));

        let smn_g: S = dkmn.dot(&g_mat);
        let smm_gg: S = dkmm.dot(&gg);
        let h = &cl.a * dkmn.transpose();
        let tr1 = (&b_inv * &h).dot(&p_mat.transpose());
        let tr2 = b_inv.dot(&(p_mat.transpose() * &dkmm * &p_mat));
        let tr_qdq = (two * smn_g - smm_gg - two * tr1 + tr2) / noise;

        let cr = &dkmn * &r;
        let quad = two * cr.dot(&g_r) - (&dkmm * &g_r).dot(&g_r);

        let dtrace = if which == 0 { nf * sig2 } else { S::zero() }
            - (two * smn_g - smm_gg);

        grad[idx] = -half * tr_qdq + half * quad - half * dtrace / noise;
    }

    // Noise parameter: dQ = noise * I in log space.
    let tr_q_inv = (nf - c::<S>(m as f64) + tr_b_inv) / noise;
    grad[3] = half * noise * (r_sq - tr_q_inv) + half * trace_term / noise;

    Ok((f, grad))
}
