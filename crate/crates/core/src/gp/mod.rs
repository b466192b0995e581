//! Gaussian-process posterior with analytic spatial derivatives.
//!
//! [`GpState`] holds a Cholesky factor of `K + Σ` (Σ the per-observation
//! noise) in row-packed storage so that [`GpState::condition`] appends one
//! row through a Schur complement in `O(n²)`. Observations are either
//! *fixed* (real, possibly noisy data) or *fantasy* (noiseless draws that the
//! rollout engine conditions on and later differentiates through).

mod derivs;
mod fantasy;
mod hypers;

pub use derivs::{DataDerivatives, ObservationDerivatives, Perturbation};
pub use fantasy::{FantasyGp, JointPosterior};
pub use hypers::{fit_hypers, log_marginal_likelihood, HyperFitOptions, LOG_HYPER_BOUNDS};

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::kernel::{self, KernelParams};
use crate::linalg::{cholesky_jittered, dot_f64, PackedLower};

/// Relative variance floor: posterior variances below `VARIANCE_FLOOR · s`
/// are clamped to zero and block `σ⁻¹`-dependent derivatives.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Base diagonal jitter relative to the amplitude.
pub const JITTER_BASE: f64 = 1e-10;

/// Observed sample locations and values.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, points: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        check_dim(points.len(), y.len())?;
        let mut x = Vec::with_capacity(points.len() * dim);
        for p in points {
            check_dim(dim, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite sample location {p:?}")));
            }
            x.extend_from_slice(p);
        }
        if let Some(v) = y.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite observation {v}")));
        }
        Ok(Self { dim, x, y: y.to_vec() })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, x: Vec::new(), y: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Running incumbent `min(y)`; `+∞` when empty.
    pub fn f_best(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        check_dim(self.dim, x.len())?;
        self.x.extend_from_slice(x);
        self.y.push(y);
        Ok(())
    }
}

/// Posterior mean/sd and requested derivative orders at one location.
#[derive(Clone, Debug)]
pub struct PosteriorMoments {
    pub mean: f64,
    pub sd: f64,
    /// Posterior variance after clamping.
    pub variance: f64,
    pub grad_mean: Option<Vec<f64>>,
    pub grad_sd: Option<Vec<f64>>,
    pub hess_mean: Option<DMatrix<f64>>,
    pub hess_sd: Option<DMatrix<f64>>,
    /// `(K + Σ)⁻¹ k_{Xx}`; present for order ≥ 1.
    pub solved_kernel: Option<Vec<f64>>,
    /// `w⁽ⁱ⁾ = (K + Σ)⁻¹ k_{Xx,i}`, one vector per input dimension; order 2.
    pub solved_kernel_grads: Option<Vec<Vec<f64>>>,
}

impl PosteriorMoments {
    /// Deterministic moments (used by acquisition tests and limits).
    pub fn from_mean_sd(mean: f64, sd: f64) -> Self {
        Self {
            mean,
            sd,
            variance: sd * sd,
            grad_mean: None,
            grad_sd: None,
            hess_mean: None,
            hess_sd: None,
            solved_kernel: None,
            solved_kernel_grads: None,
        }
    }

    pub fn order(&self) -> u8 {
        if self.hess_mean.is_some() {
            2
        } else if self.grad_mean.is_some() {
            1
        } else {
            0
        }
    }
}

#[derive(Clone, Debug)]
pub struct GpState {
    params: KernelParams,
    noise: f64,
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    noise_diag: Vec<f64>,
    fantasy: Vec<bool>,
    chol: PackedLower,
    /// `L⁻¹ y`
    u: Vec<f64>,
    /// `(K + Σ)⁻¹ y`
    c: Vec<f64>,
    /// Uniform diagonal jitter added at the last full factorization.
    jitter: f64,
}

impl GpState {
    /// Fits the posterior to `data` with observation variance `noise`.
    pub fn fit(data: &Dataset, params: KernelParams, noise: f64) -> Result<Self> {
        Self::fit_with_capacity(data, params, noise, 0)
    }

    /// Like [`fit`](Self::fit), reserving factor rows for `extra` future
    /// conditioning steps.
    pub fn fit_with_capacity(
        data: &Dataset,
        params: KernelParams,
        noise: f64,
        extra: usize,
    ) -> Result<Self> {
        check_dim(params.dim(), data.dim())?;
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise must be non-negative, got {noise}")));
        }
        let n = data.len();
        Self::factorize(
            params,
            noise,
            data.dim(),
            data.x.clone(),
            data.y.clone(),
            vec![noise; n],
            vec![false; n],
            extra,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn factorize(
        params: KernelParams,
        noise: f64,
        dim: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        noise_diag: Vec<f64>,
        fantasy: Vec<bool>,
        extra: usize,
    ) -> Result<Self> {
        let n = y.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let xi = &x[i * dim..(i + 1) * dim];
            for j in 0..i {
                let v = kernel::value_unchecked(&params, xi, &x[j * dim..(j + 1) * dim]);
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
            a[i * n + i] = params.amplitude() + noise_diag[i];
        }
        let (factor, jitter) = cholesky_jittered(&a, n, JITTER_BASE * params.amplitude())?;
        let mut chol = PackedLower::with_capacity(n + extra);
        for i in 0..n {
            let row = factor.row(i);
            chol.push_row(&row[..i], row[i]);
        }
        let mut u = y.clone();
        chol.forward_solve_in_place(&mut u);
        let mut c = u.clone();
        chol.backward_solve_in_place(&mut c);
        Ok(Self { params, noise, dim, x, y, noise_diag, fantasy, chol, u, c, jitter })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn is_fantasy(&self, i: usize) -> bool {
        self.fantasy[i]
    }

    /// Incumbent over all observations (fixed and fantasy).
    pub fn f_best(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dataset(&self) -> Dataset {
        Dataset { dim: self.dim, x: self.x.clone(), y: self.y.clone() }
    }

    pub fn chol(&self) -> &PackedLower {
        &self.chol
    }

    /// `(K + Σ)⁻¹ y`.
    pub fn weights(&self) -> &[f64] {
        &self.c
    }

    /// `L⁻¹ y`.
    pub fn whitened_targets(&self) -> &[f64] {
        &self.u
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Dense `K + Σ` (including any jitter), row-major.
    pub fn covariance_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let v = kernel::value_unchecked(&self.params, self.point(i), self.point(j));
                a[i * n + j] = v;
                a[j * n + i] = v;
            }
            a[i * n + i] = self.params.amplitude() + self.noise_diag[i] + self.jitter;
        }
        a
    }

    fn variance_floor(&self) -> f64 {
        VARIANCE_FLOOR * self.params.amplitude()
    }

    /// Posterior moments at `x` with derivatives up to `order` (0, 1 or 2).
    pub fn posterior(&self, x: &[f64], order: u8) -> Result<PosteriorMoments> {
        check_dim(self.dim, x.len())?;
        if order > 2 {
            return Err(Error::InvalidArgument(format!("derivative order {order} > 2")));
        }
        let n = self.len();
        let d = self.dim;
        let s = self.params.amplitude();
        let mut v: Vec<f64> =
            (0..n).map(|l| kernel::value_unchecked(&self.params, x, self.point(l))).collect();
        self.chol.forward_solve_in_place(&mut v);
        let mean = dot_f64(&v, &self.u);
        let raw_var = s - dot_f64(&v, &v);
        let variance = if raw_var < self.variance_floor() { 0.0 } else { raw_var };
        let sd = variance.sqrt();
        let mut m = PosteriorMoments::from_mean_sd(mean, sd);
        m.variance = variance;
        if order == 0 {
            return Ok(m);
        }
        if variance == 0.0 {
            return Err(Error::DegenerateVariance { variance: raw_var });
        }
        // d = (K + Σ)⁻¹ k_{Xx}
        let mut dvec = v;
        self.chol.backward_solve_in_place(&mut dvec);

        let mut grad_mean = vec![0.0; d];
        let mut kd = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        let mut kgrads = if order == 2 { vec![vec![0.0; n]; d] } else { Vec::new() };
        let mut hm = vec![0.0; d * d];
        let mut hkd = vec![0.0; d * d];
        for l in 0..n {
            if order == 2 {
                kernel::value_grad_hess_unchecked(&self.params, x, self.point(l), &mut g, &mut h);
                for k in 0..d * d {
                    hm[k] += h[k] * self.c[l];
                    hkd[k] += h[k] * dvec[l];
                }
                for i in 0..d {
                    kgrads[i][l] = g[i];
                }
            } else {
                kernel::value_grad_unchecked(&self.params, x, self.point(l), &mut g);
            }
            for i in 0..d {
                grad_mean[i] += g[i] * self.c[l];
                kd[i] += g[i] * dvec[l];
            }
        }
        let grad_sd: Vec<f64> = kd.iter().map(|v| -v / sd).collect();
        if order == 2 {
            let mut w = kgrads.clone();
            for wi in w.iter_mut() {
                self.chol.solve_in_place(wi);
            }
            let hess_mean = DMatrix::from_row_slice(d, d, &hm);
            let mut hess_sd = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..=i {
                    let cross = dot_f64(&kgrads[i], &w[j]);
                    let v = -(hkd[i * d + j] + cross + grad_sd[i] * grad_sd[j]) / sd;
                    hess_sd[(i, j)] = v;
                    hess_sd[(j, i)] = v;
                }
            }
            m.hess_mean = Some(hess_mean);
            m.hess_sd = Some(hess_sd);
            m.solved_kernel_grads = Some(w);
        }
        m.grad_mean = Some(grad_mean);
        m.grad_sd = Some(grad_sd);
        m.solved_kernel = Some(dvec);
        Ok(m)
    }

    /// Adds a fixed observation with the state's noise via a Schur-complement
    /// update. Falls back to a jittered refit if the pivot is not positive.
    pub fn condition(&self, x_new: &[f64], y_new: f64) -> Result<Self> {
        self.append(x_new, y_new, self.noise, false)
    }

    /// Adds a noiseless fantasy observation.
    ///
    /// A pivot below `JITTER_BASE · s` is lifted to that value by giving the
    /// observation a matching nugget, which keeps the factor well conditioned
    /// when a fantasy lands close to existing data.
    pub fn condition_fantasy(&self, x_new: &[f64], y_new: f64) -> Result<Self> {
        self.append(x_new, y_new, 0.0, true)
    }

    fn append(&self, x_new: &[f64], y_new: f64, noise: f64, fantasy: bool) -> Result<Self> {
        check_dim(self.dim, x_new.len())?;
        if !y_new.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite observation".into()));
        }
        let n = self.len();
        let s = self.params.amplitude();
        let mut l: Vec<f64> =
            (0..n).map(|i| kernel::value_unchecked(&self.params, x_new, self.point(i))).collect();
        self.chol.forward_solve_in_place(&mut l);
        let mut nugget = noise;
        let mut pivot = s + noise + self.jitter - dot_f64(&l, &l);
        let min_pivot = JITTER_BASE * s;
        if fantasy && pivot < min_pivot {
            nugget += min_pivot - pivot;
            pivot = min_pivot;
        }
        let mut next = self.clone();
        next.x.extend_from_slice(x_new);
        next.y.push(y_new);
        next.noise_diag.push(nugget);
        next.fantasy.push(fantasy);
        if !(pivot > 0.0) {
            return Self::factorize(
                next.params,
                next.noise,
                next.dim,
                next.x,
                next.y,
                next.noise_diag,
                next.fantasy,
                0,
            );
        }
        let diag = pivot.sqrt();
        let un = (y_new - dot_f64(&l, &self.u)) / diag;
        next.chol.push_row(&l, diag);
        next.u.push(un);
        let mut c = next.u.clone();
        next.chol.backward_solve_in_place(&mut c);
        next.c = c;
        Ok(next)
    }
}
