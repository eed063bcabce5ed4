//! Independent reference implementations used to cross-check the GP core.
//!
//! Everything here is deliberately written from scratch on plain `Vec`s:
//! dense linear solves use hand-rolled partial-pivot LU (no nalgebra, no
//! Cholesky) so agreement with the library is evidence of correctness
//! rather than shared plumbing.

#![allow(dead_code)]
// Index-style loops and flat argument lists are kept on purpose: they
// mirror the textbook formulations these references are transcribed from.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::too_many_arguments)]

/// Rational-quadratic kernel, re-derived here rather than imported.
pub fn rq(sig2: f64, ell: f64, alpha: f64, a: [f64; 2], b: [f64; 2], wrap: bool) -> f64 {
    let mut da = (a[0] - b[0]).abs();
    if wrap {
        let tau = std::f64::consts::TAU;
        da = da.rem_euclid(tau);
        da = da.min(tau - da);
    }
    let db = a[1] - b[1];
    let r2 = da * da + db * db;
    sig2 * (1.0 + r2 / (2.0 * alpha * ell * ell)).powf(-alpha)
}

/// Solve `A x = b` by partial-pivot Gaussian elimination. Panics on a
/// pivot smaller than 1e-300 (callers supply well-posed systems).
pub fn lu_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if piv != col {
            m.swap(col, piv);
            x.swap(col, piv);
        }
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular system in oracle solve");
        for row in col + 1..n {
            let f = m[row][col] / p;
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
                x[row] -= f * x[col];
            }
        }
    }
    for col in (0..n).rev() {
        x[col] /= m[col][col];
        for row in 0..col {
            let f = m[row][col];
            x[row] -= f * x[col];
        }
    }
    x
}

/// Log-determinant of a positive-definite matrix via unpivoted LU.
/// Good enough for the well-conditioned covariance matrices in tests.
pub fn logdet_pd(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m = a.to_vec();
    let mut acc = 0.0;
    for col in 0..n {
        let p = m[col][col];
        assert!(p > 0.0, "matrix not positive definite in oracle logdet");
        acc += p.ln();
        for row in col + 1..n {
            let f = m[row][col] / p;
            if f != 0.0 {
                for k in col..n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    acc
}

/// Dense covariance matrix `K + diag` over one input set.
pub fn gram(
    sig2: f64,
    ell: f64,
    alpha: f64,
    xs: &[[f64; 2]],
    diag: f64,
    wrap: bool,
) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = rq(sig2, ell, alpha, xs[i], xs[j], wrap);
        }
        k[i][i] += diag;
    }
    k
}

/// Exact GP posterior at `q`: mean and observation variance, computed as
///   mean = k_q (K + s_n I)^-1 y
///   var  = k(q,q) - k_q (K + s_n I)^-1 k_q^T + s_n
pub fn exact_gp(
    sig2: f64,
    ell: f64,
    alpha: f64,
    noise: f64,
    xs: &[[f64; 2]],
    ys: &[f64],
    q: [f64; 2],
    wrap: bool,
) -> (f64, f64) {
    let k = gram(sig2, ell, alpha, xs, noise, wrap);
    let w = lu_solve(&k, ys);
    let kq: Vec<f64> = xs.iter().map(|&x| rq(sig2, ell, alpha, x, q, wrap)).collect();
    let mean: f64 = kq.iter().zip(&w).map(|(a, b)| a * b).sum();
    let v = lu_solve(&k, &kq);
    let reduction: f64 = kq.iter().zip(&v).map(|(a, b)| a * b).sum();
    let var = rq(sig2, ell, alpha, q, q, wrap) - reduction + noise;
    (mean, var)
}

/// Dense log marginal likelihood  log N(y | 0, K + s_n I).
pub fn exact_lml(
    sig2: f64,
    ell: f64,
    alpha: f64,
    noise: f64,
    xs: &[[f64; 2]],
    ys: &[f64],
    wrap: bool,
) -> f64 {
    let n = xs.len() as f64;
    let k = gram(sig2, ell, alpha, xs, noise, wrap);
    let w = lu_solve(&k, ys);
    let quad: f64 = ys.iter().zip(&w).map(|(a, b)| a * b).sum();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + logdet_pd(&k) + quad)
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[i] += h;
    lo[i] -= h;
    (f(&hi) - f(&lo)) / (2.0 * h)
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn lu_solve_recovers_known_solution() {
        let a = vec![
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.0, -1.0, 2.0],
        ];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[i][j] * x_true[j]).sum())
            .collect();
        let x = lu_solve(&a, &b);
        for (got, want) in x.iter().zip(x_true.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn logdet_matches_hand_value() {
        // det [[2,1],[1,2]] = 3
        let a = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        assert!((logdet_pd(&a) - 3f64.ln()).abs() < 1e-12);
    }
}
