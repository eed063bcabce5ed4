//! Sparse variational GP: fitting and prediction.

use super::elbo::{collapse, elbo, elbo_grad};
use super::kernel::{rq_kernel, AngleMetric, RqKernelParams};
use super::linalg::{chol_jittered, solve_lower, solve_lower_tr};
use super::{GpError, Prediction, TrainingSet};
use crate::scalar::{c, Scalar};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Where the inducing inputs come from. They stay fixed during
/// optimization either way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InducingInit {
    /// Uniform grid over the bounding box of the training inputs, shaped to
    /// roughly match its aspect ratio. With a wrapped azimuth spanning the
    /// full turn the grid is laid out half-open so the seam is not doubled.
    Grid,
    /// First `m` training inputs verbatim (m = n reproduces the exact GP).
    FromTraining,
    /// Caller-provided locations; length must equal the requested count.
    Explicit(Vec<[f64; 2]>),
}

/// Budget and convergence policy for the bound optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimSettings {
    /// Maximum accepted ascent steps; 0 freezes the hyperparameters.
    pub max_iters: usize,
    /// Early-stop once the bound moves less than this...
    pub min_delta: f64,
    /// ...for this many consecutive accepted steps.
    pub patience: usize,
    /// Initial per-parameter step in log space.
    pub init_step: f64,
    pub inducing: InducingInit,
}

impl Default for OptimSettings {
    fn default() -> Self {
        OptimSettings {
            max_iters: 100,
            min_delta: 1e-6,
            patience: 5,
            init_step: 0.08,
            inducing: InducingInit::Grid,
        }
    }
}

/// Fitted sparse GP. Zero mean function; the variational posterior over
/// inducing outputs is stored as its mean and lower-triangular covariance
/// factor, plus solved helpers so prediction per query is one kernel column,
/// one matrix-vector product, and two dot products.
#[derive(Clone, Debug)]
pub struct SgpModel<S: Scalar> {
    kernel: RqKernelParams<S>,
    metric: AngleMetric,
    inducing: Vec<[S; 2]>,
    noise_variance: S,
    /// Variational posterior mean over inducing outputs.
    variational_mean: DVector<S>,
    /// Lower-triangular factor of the variational posterior covariance.
    variational_cov_factor: DMatrix<S>,
    /// K_mm^-1 * variational_mean, the prediction weight vector.
    weights: DVector<S>,
    /// Symmetric matrix Q with latent variance = signal - k_q^T Q k_q;
    /// Q = L^-T (I - G G^T) L^-1 where G = L^-1 * variational_cov_factor.
    quad: DMatrix<S>,
    jitter: f64,
    elbo_trace: Vec<S>,
}

fn linspace<S: Scalar>(lo: S, hi: S, k: usize, half_open: bool) -> Vec<S> {
    if k == 1 {
        return vec![(lo + hi) * c::<S>(0.5)];
    }
    let denom = if half_open { k } else { k - 1 };
    let step = (hi - lo) / c::<S>(denom as f64);
    (0..k).map(|i| lo + step * c::<S>(i as f64)).collect()
}

fn grid_inducing<S: Scalar>(
    inputs: &[[S; 2]],
    m: usize,
    metric: AngleMetric,
) -> Vec<[S; 2]> {
    let mut az_lo = inputs[0][0];
    let mut az_hi = inputs[0][0];
    let mut el_lo = inputs[0][1];
    let mut el_hi = inputs[0][1];
    for p in inputs {
        az_lo = az_lo.min(p[0]);
        az_hi = az_hi.max(p[0]);
        el_lo = el_lo.min(p[1]);
        el_hi = el_hi.max(p[1]);
    }
    let az_span: f64 = (az_hi - az_lo).to_subset().unwrap_or(0.0);
    let el_span: f64 = (el_hi - el_lo).to_subset().unwrap_or(0.0);
    let aspect = (az_span.max(1e-9) / el_span.max(1e-9)).clamp(1e-6, 1e6);
    let ga = ((m as f64 * aspect).sqrt().round() as usize).clamp(1, m);
    let gb = m.div_ceil(ga);
    // Full-turn wrapped azimuth: half-open spacing avoids duplicating the seam.
    let half_open = metric == AngleMetric::WrapAzimuth && az_span > 1.9 * std::f64::consts::PI;
    let az = linspace(az_lo, az_hi, ga, half_open);
    let el = linspace(el_lo, el_hi, gb, false);
    let mut pts = Vec::with_capacity(ga * gb);
    for &a in &az {
        for &e in &el {
            pts.push([a, e]);
        }
    }
    // The grid may overshoot the requested count; drop the surplus spread
    // evenly through the grid so no region loses coverage.
    let g = pts.len();
    if g > m {
        pts = (0..m).map(|i| pts[i * g / m]).collect();
    }
    pts
}

/// Fit by maximizing the collapsed bound over the four log hyperparameters
/// with sign-adaptive per-parameter steps; a step is accepted only if the
/// bound does not decrease, so the recorded trace is monotone.
pub fn fit_svgp<S: Scalar>(
    train: &TrainingSet<S>,
    initial_kernel: &RqKernelParams<S>,
    num_inducing: usize,
    optim: &OptimSettings,
) -> Result<SgpModel<S>, GpError> {
    train.validate()?;
    initial_kernel.validate()?;
    let n = train.len();
    if n == 0 {
        return Err(GpError::InvalidArgument("empty training set".into()));
    }
    if num_inducing == 0 || num_inducing > n {
        return Err(GpError::InvalidArgument(format!(
            "inducing count {num_inducing} outside 1..={n}"
        )));
    }
    if n >= 2 {
        let first = train.inputs[0];
        let spread = train.inputs.iter().fold(S::zero(), |acc, p| {
            acc.max((p[0] - first[0]).abs() + (p[1] - first[1]).abs())
        });
        if spread < c::<S>(1e-12) {
            return Err(GpError::DegenerateData(
                "all training inputs identical".into(),
            ));
        }
    }

    let inducing: Vec<[S; 2]> = match &optim.inducing {
        InducingInit::Grid => grid_inducing(&train.inputs, num_inducing, train.metric),
        InducingInit::FromTraining => train.inputs[..num_inducing].to_vec(),
        InducingInit::Explicit(pts) => {
            if pts.len() != num_inducing {
                return Err(GpError::InvalidArgument(format!(
                    "{} explicit inducing inputs but {num_inducing} requested",
                    pts.len()
                )));
            }
            pts.iter().map(|p| [c::<S>(p[0]), c::<S>(p[1])]).collect()
        }
    };

    // Optimize in log space: theta = [ln sig2, ln ell, ln alpha, ln noise].
    let mut theta = [
        initial_kernel.signal_variance.ln(),
        initial_kernel.lengthscale.ln(),
        initial_kernel.alpha.ln(),
        train.noise_variance.ln(),
    ];
    const LO: f64 = -20.7; // ~1e-9
    const HI: f64 = 20.7; // ~1e9
    let rebuild = |th: &[S; 4]| -> (RqKernelParams<S>, TrainingSet<S>) {
        let kernel = RqKernelParams {
            signal_variance: th[0].exp(),
            lengthscale: th[1].exp(),
            alpha: th[2].exp(),
        };
        let mut t = train.clone();
        t.noise_variance = th[3].exp();
        (kernel, t)
    };

    let (k0, t0) = rebuild(&theta);
    let (mut f_cur, mut g_cur) = elbo_grad(&t0, &k0, &inducing)?;
    let mut trace = vec![f_cur];
    let mut step = [c::<S>(optim.init_step); 4];
    let mut prev_sign = [S::zero(); 4];
    let mut calm_steps = 0usize;

    let mut iter = 0usize;
    while iter < optim.max_iters {
        iter += 1;
        let mut delta = [S::zero(); 4];
        for i in 0..4 {
            delta[i] = if g_cur[i] > S::zero() {
                step[i]
            } else if g_cur[i] < S::zero() {
                -step[i]
            } else {
                S::zero()
            };
        }
        // Backtrack the whole proposal until the bound stops decreasing.
        let mut accepted: Option<([S; 4], S)> = None;
        for _ in 0..8 {
            let mut cand = theta;
            for i in 0..4 {
                cand[i] = (cand[i] + delta[i]).clamp(c::<S>(LO), c::<S>(HI));
            }
            let (k, t) = rebuild(&cand);
            match elbo(&t, &k, &inducing) {
                Ok(f_new) if f_new >= f_cur => {
                    accepted = Some((cand, f_new));
                    break;
                }
                _ => {
                    for d in delta.iter_mut() {
                        *d *= c::<S>(0.5);
                    }
                }
            }
        }
        match accepted {
            Some((cand, f_new)) => {
                let improve = f_new - f_cur;
                theta = cand;
                f_cur = f_new;
                let (k, t) = rebuild(&theta);
                let (_, g_new) = elbo_grad(&t, &k, &inducing)?;
                for i in 0..4 {
                    let s_new = if g_new[i] > S::zero() {
                        S::one()
                    } else if g_new[i] < S::zero() {
                        -S::one()
                    } else {
                        S::zero()
                    };
                    if s_new * prev_sign[i] > S::zero() {
                        step[i] = (step[i] * c::<S>(1.2)).min(c::<S>(0.5));
                    } else if s_new * prev_sign[i] < S::zero() {
                        step[i] = (step[i] * c::<S>(0.5)).max(c::<S>(1e-5));
                    }
                    prev_sign[i] = s_new;
                }
                g_cur = g_new;
                trace.push(f_cur);
                if improve.abs() < c::<S>(optim.min_delta) {
                    calm_steps += 1;
                    if calm_steps >= optim.patience {
                        break;
                    }
                } else {
                    calm_steps = 0;
                }
            }
            None => {
                // No improving direction at this scale; shrink and retry,
                // or stop once the steps are at the floor.
                let mut all_floor = true;
                for s in step.iter_mut() {
                    *s = (*s * c::<S>(0.5)).max(c::<S>(1e-5));
                    if *s > c::<S>(1e-5) {
                        all_floor = false;
                    }
                }
                if all_floor {
                    break;
                }
            }
        }
    }

    let (kernel, tuned) = rebuild(&theta);
    build_model(&tuned, &kernel, inducing, trace)
}

/// Assemble the collapsed posterior at fixed hyperparameters.
fn build_model<S: Scalar>(
    train: &TrainingSet<S>,
    kernel: &RqKernelParams<S>,
    inducing: Vec<[S; 2]>,
    elbo_trace: Vec<S>,
) -> Result<SgpModel<S>, GpError> {
    let cl = collapse(train, kernel, &inducing)?;
    let m = inducing.len();

    // mu_m = L L_B^-T c ; Sigma_m = F F^T with F = L L_B^-T.
    let c_mat = DMatrix::from_column_slice(m, 1, cl.c_vec.as_slice());
    let lbt_c = solve_lower_tr(&cl.b_l, &c_mat)?;
    let mu = &cl.l * DVector::from_column_slice(lbt_c.as_slice());
    let f_mat = solve_lower(&cl.b_l, &cl.l.transpose())?.transpose();
    let cov = &f_mat * f_mat.transpose();
    let cov_l = chol_jittered(&cov, true)?.l;

    // weights = K_mm^-1 mu ; quad = L^-T (I - G G^T) L^-1 with G = L^-1 cov_l,
    // so the latent predictive variance is signal - k_q^T quad k_q.
    let mu_mat = DMatrix::from_column_slice(m, 1, mu.as_slice());
    let w = solve_lower_tr(&cl.l, &solve_lower(&cl.l, &mu_mat)?)?;
    let weights = DVector::from_column_slice(w.as_slice());
    let g = solve_lower(&cl.l, &cov_l)?;
    let a = DMatrix::identity(m, m) - &g * g.transpose();
    let y = solve_lower_tr(&cl.l, &a)?;
    let qt = solve_lower_tr(&cl.l, &y.transpose())?;
    // qt = (L^-T A L^-1)^T; average with its transpose to restore the exact
    // symmetry the algebra promises but rounding loses.
    let quad = (&qt + qt.transpose()) * c::<S>(0.5);

    Ok(SgpModel {
        kernel: *kernel,
        metric: train.metric,
        inducing,
        noise_variance: train.noise_variance,
        variational_mean: mu,
        variational_cov_factor: cov_l,
        weights,
        quad,
        jitter: cl.jitter,
        elbo_trace,
    })
}

impl<S: Scalar> SgpModel<S> {
    /// Posterior at one direction. Latent variance is clamped to
    /// [0, signal variance] before the noise floor is added, so the result
    /// always lies in [noise, signal + noise].
    pub fn predict(&self, query: [S; 2]) -> Prediction<S> {
        self.predict_many(std::slice::from_ref(&query))
            .pop()
            .expect("one query yields one prediction")
    }

    /// Batch prediction in input order. The cost is one m-by-n_q kernel
    /// matrix, one matrix product against the stored quadratic form, and two
    /// dot products per query.
    pub fn predict_many(&self, queries: &[[S; 2]]) -> Vec<Prediction<S>> {
        let m = self.inducing.len();
        let nq = queries.len();
        if nq == 0 {
            return Vec::new();
        }
        let kq = DMatrix::<S>::from_fn(m, nq, |i, j| {
            rq_kernel(&self.kernel, self.metric, self.inducing[i], queries[j])
        });
        let h = &self.quad * &kq;
        let prior = self.kernel.signal_variance;
        (0..nq)
            .map(|j| {
                let kc = kq.column(j);
                let mean = self.weights.dot(&kc);
                let latent = (prior - kc.dot(&h.column(j))).max(S::zero()).min(prior);
                Prediction { mean, variance: latent + self.noise_variance }
            })
            .collect()
    }

    /// Threshold the posterior mean. Strictly greater counts as positive;
    /// a mean exactly at the threshold classifies negative.
    pub fn classify(&self, query: [S; 2], threshold: S) -> bool {
        self.predict(query).mean > threshold
    }

    pub fn kernel(&self) -> &RqKernelParams<S> {
        &self.kernel
    }

    pub fn metric(&self) -> AngleMetric {
        self.metric
    }

    pub fn noise_variance(&self) -> S {
        self.noise_variance
    }

    pub fn inducing_inputs(&self) -> &[[S; 2]] {
        &self.inducing
    }

    pub fn variational_mean(&self) -> &DVector<S> {
        &self.variational_mean
    }

    pub fn variational_cov_factor(&self) -> &DMatrix<S> {
        &self.variational_cov_factor
    }

    /// Bound values over accepted optimizer steps (first entry = initial).
    pub fn elbo_trace(&self) -> &[S] {
        &self.elbo_trace
    }

    /// Prior variance plus noise: the variance a query far from all data
    /// reverts to.
    pub fn prior_variance(&self) -> S {
        self.kernel.signal_variance + self.noise_variance
    }

    /// Human-readable dump of hyperparameters, inducing inputs, and the
    /// bound trace, for offline inspection.
    pub fn write_debug(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "sparse gp model")?;
        writeln!(
            w,
            "signal_variance {:?}\nlengthscale {:?}\nalpha {:?}\nnoise_variance {:?}",
            self.kernel.signal_variance, self.kernel.lengthscale, self.kernel.alpha,
            self.noise_variance
        )?;
        writeln!(w, "metric {:?}", self.metric)?;
        writeln!(w, "jitter {:e}", self.jitter)?;
        writeln!(w, "inducing {}", self.inducing.len())?;
        for p in &self.inducing {
            writeln!(w, "{:?} {:?}", p[0], p[1])?;
        }
        writeln!(w, "elbo_trace {}", self.elbo_trace.len())?;
        for v in &self.elbo_trace {
            writeln!(w, "{:?}", v)?;
        }
        Ok(())
    }
}
