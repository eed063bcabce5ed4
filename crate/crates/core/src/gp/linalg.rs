//! Cholesky with the escalating-jitter policy.

use super::GpError;
use crate::scalar::{c, Scalar};
use nalgebra::DMatrix;

/// Successful factorization: the lower factor and the jitter that made it.
#[derive(Clone, Debug)]
pub(crate) struct JitteredChol<S: Scalar> {
    pub l: DMatrix<S>,
    pub jitter: f64,
}

/// Factor `mat + jitter*I`, starting at 1e-8 and escalating tenfold up to
/// 1e-2 before giving up. `allow_zero_first` additionally tries the matrix
/// as-is, for systems that already carry a noise diagonal.
pub(crate) fn chol_jittered<S: Scalar>(
    mat: &DMatrix<S>,
    allow_zero_first: bool,
) -> Result<JitteredChol<S>, GpError> {
    debug_assert_eq!(mat.nrows(), mat.ncols());
    let mut ladder: Vec<f64> = Vec::with_capacity(8);
    if allow_zero_first {
        ladder.push(0.0);
    }
    let mut j = 1e-8;
    while j <= 1e-2 * 1.000001 {
        ladder.push(j);
        j *= 10.0;
    }
    for jitter in ladder {
        let mut m = mat.clone();
        if jitter > 0.0 {
            let jv = c::<S>(jitter);
            for i in 0..m.nrows() {
                m[(i, i)] += jv;
            }
        }
        if let Some(ch) = nalgebra::linalg::Cholesky::new(m) {
            return Ok(JitteredChol { l: ch.unpack(), jitter });
        }
    }
    Err(GpError::NumericalFailure(format!(
        "Cholesky failed for {}x{} matrix after jitter up to 1e-2",
        mat.nrows(),
        mat.ncols()
    )))
}

/// `L^-1 b` for lower-triangular `L`, as a hard error instead of Option.
pub(crate) fn solve_lower<S: Scalar>(
    l: &DMatrix<S>,
    b: &DMatrix<S>,
) -> Result<DMatrix<S>, GpError> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| GpError::NumericalFailure("singular triangular solve".into()))
}

/// `L^-T b` without forming the transpose.
pub(crate) fn solve_lower_tr<S: Scalar>(
    l: &DMatrix<S>,
    b: &DMatrix<S>,
) -> Result<DMatrix<S>, GpError> {
    l.tr_solve_lower_triangular(b)
        .ok_or_else(|| GpError::NumericalFailure("singular triangular solve".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_spd_matrix_takes_first_rung() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = chol_jittered(&m, true).unwrap();
        assert_eq!(f.jitter, 0.0);
        // L L^T reproduces the input.
        let back = &f.l * f.l.transpose();
        assert!((back - m).abs().max() < 1e-12);
    }

    #[test]
    fn rank_deficient_matrix_escalates() {
        // Outer product: rank 1, needs jitter to factor.
        let v = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let f = chol_jittered(&m, true).unwrap();
        assert!(f.jitter > 0.0);
        assert!(f.jitter <= 1e-2);
    }

    #[test]
    fn hopeless_matrix_reports_numerical_failure() {
        let m = DMatrix::from_row_slice(2, 2, &[-5.0, 0.0, 0.0, -5.0]);
        match chol_jittered(&m, true) {
            Err(GpError::NumericalFailure(_)) => {}
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }
}
