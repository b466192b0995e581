//! GP conditioned on sampled (value, gradient) pairs at fantasy points.
//!
//! The joint factor keeps the base state's `f64` Cholesky factor as its
//! leading block and appends `1 + d` rows per fantasy point in the scalar
//! type `T`. With `T = Dual<N>` every sampled quantity carries its total
//! derivative with respect to the rollout start point.

use std::sync::Arc;

use super::{GpState, JITTER_BASE};
use crate::error::{check_dim, Error, Result};
use crate::kernel;
use crate::linalg::{cholesky_jittered, PackedLower};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct FantasyGp<T: Scalar = f64> {
    base: Arc<GpState>,
    points: Vec<Vec<T>>,
    values: Vec<T>,
    grads: Vec<Vec<T>>,
    /// Appended factor rows; row `k` has `base.len() + k + 1` entries.
    rows: Vec<Vec<T>>,
    /// Whitened targets of the appended rows.
    u: Vec<T>,
}

/// Joint posterior of `(f(q), ∇f(q))`.
#[derive(Clone, Debug)]
pub struct JointPosterior<T: Scalar = f64> {
    /// `[μ_f, μ_∇f]`
    pub mean: Vec<T>,
    /// Row-major `(1 + d)²` covariance, before any jitter.
    pub cov: Vec<T>,
    /// Factor used for sampling; pivots below the tolerance are zeroed so
    /// that an already-determined direction contributes no noise.
    factor: PackedLower<T>,
    /// `L⁻¹ C`, one column per output.
    cross: Vec<Vec<T>>,
    rank_deficient: bool,
    amplitude: f64,
}

impl<T: Scalar> JointPosterior<T> {
    pub fn dim(&self) -> usize {
        self.mean.len() - 1
    }

    /// Standard deviation of the value output, clamped at zero.
    pub fn sd(&self) -> f64 {
        self.cov[0].re().max(0.0).sqrt()
    }

    /// Standard deviation of gradient component `i`.
    pub fn grad_sd(&self, i: usize) -> f64 {
        let n = self.mean.len();
        self.cov[(i + 1) * n + i + 1].re().max(0.0).sqrt()
    }

    /// `mean + L z`.
    pub fn sample(&self, z: &[f64]) -> Result<Vec<T>> {
        check_dim(self.mean.len(), z.len())?;
        let n = self.mean.len();
        let mut out = self.mean.clone();
        for (a, o) in out.iter_mut().enumerate() {
            let row = self.factor.row(a);
            for b in 0..=a {
                *o += row[b] * z[b];
            }
        }
        debug_assert_eq!(out.len(), n);
        Ok(out)
    }
}

/// Cholesky that treats pivots at or below `tol` as exact zeros.
fn psd_cholesky<T: Scalar>(a: &[T], n: usize, tol: f64) -> (PackedLower<T>, bool) {
    let mut l: PackedLower<T> = PackedLower::with_capacity(n);
    let mut row: Vec<T> = Vec::with_capacity(n);
    let mut deficient = false;
    for i in 0..n {
        row.clear();
        for j in 0..i {
            let rj = l.row(j);
            if rj[j].re() == 0.0 {
                row.push(T::zero());
                continue;
            }
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= row[k] * rj[k];
            }
            row.push(s / rj[j]);
        }
        let mut d = a[i * n + i];
        for v in row.iter() {
            d -= *v * *v;
        }
        if d.re() > tol {
            l.push_row(&row, d.sqrt());
        } else {
            deficient = true;
            l.push_row(&row, T::zero());
        }
    }
    (l, deficient)
}

impl<T: Scalar> FantasyGp<T> {
    pub fn new(base: Arc<GpState>) -> Self {
        Self {
            base,
            points: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            rows: Vec::new(),
            u: Vec::new(),
        }
    }

    pub fn base(&self) -> &GpState {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn num_fantasies(&self) -> usize {
        self.points.len()
    }

    pub fn fantasy_point(&self, j: usize) -> &[T] {
        &self.points[j]
    }

    pub fn fantasy_value(&self, j: usize) -> T {
        self.values[j]
    }

    pub fn fantasy_grad(&self, j: usize) -> &[T] {
        &self.grads[j]
    }

    fn total_len(&self) -> usize {
        self.base.len() + self.rows.len()
    }

    /// Solves with the combined (base + appended) lower factor.
    fn forward_solve(&self, b: &mut [T]) {
        let chol = self.base.chol();
        let nb = self.base.len();
        for i in 0..nb {
            let row = chol.row(i);
            let mut s = b[i];
            for j in 0..i {
                s -= b[j] * row[j];
            }
            b[i] = s / row[i];
        }
        for (k, row) in self.rows.iter().enumerate() {
            let i = nb + k;
            let mut s = b[i];
            for j in 0..i {
                s -= row[j] * b[j];
            }
            b[i] = s / row[i];
        }
    }

    /// Joint posterior of value and gradient at `q`.
    pub fn joint_posterior(&self, q: &[T]) -> Result<JointPosterior<T>> {
        let d = self.dim();
        check_dim(d, q.len())?;
        let params = self.base.params();
        let s = params.amplitude();
        let p = d + 1;
        let n = self.total_len();
        // cross[a][l]: covariance between output a and observation l
        let mut cross = vec![vec![T::zero(); n]; p];
        let mut g = vec![T::zero(); d];
        let mut h = vec![T::zero(); d * d];
        let mut xt = vec![T::zero(); d];
        for l in 0..self.base.len() {
            for (t, v) in xt.iter_mut().zip(self.base.point(l)) {
                *t = T::from_f64(*v);
            }
            let k = kernel::value_grad_unchecked(params, q, &xt, &mut g);
            cross[0][l] = k;
            for i in 0..d {
                cross[i + 1][l] = g[i];
            }
        }
        let mut l = self.base.len();
        for pt in &self.points {
            let k = kernel::value_grad_hess_unchecked(params, q, pt, &mut g, &mut h);
            cross[0][l] = k;
            for i in 0..d {
                cross[i + 1][l] = g[i];
            }
            for j in 0..d {
                cross[0][l + 1 + j] = -g[j];
                for i in 0..d {
                    cross[i + 1][l + 1 + j] = -h[i * d + j];
                }
            }
            l += p;
        }
        for col in cross.iter_mut() {
            self.forward_solve(col);
        }
        let mut mean = vec![T::zero(); p];
        let base_u = self.base.whitened_targets();
        for (a, col) in cross.iter().enumerate() {
            let mut m = T::zero();
            for (v, u) in col.iter().zip(base_u) {
                m += *v * *u;
            }
            for (v, u) in col[self.base.len()..].iter().zip(&self.u) {
                m += *v * *u;
            }
            mean[a] = m;
        }
        let mut cov = vec![T::zero(); p * p];
        for a in 0..p {
            for b in 0..=a {
                let mut c = if a == b {
                    T::from_f64(if a == 0 { s } else { params.gradient_prior_variance(a - 1) })
                } else {
                    T::zero()
                };
                for (x, y) in cross[a].iter().zip(&cross[b]) {
                    c -= *x * *y;
                }
                cov[a * p + b] = c;
                cov[b * p + a] = c;
            }
        }
        let (factor, rank_deficient) = psd_cholesky(&cov, p, JITTER_BASE * s);
        Ok(JointPosterior { mean, cov, factor, cross, rank_deficient, amplitude: s })
    }

    /// Draws `(f̂, ∇f̂)` at `q` from the joint posterior using `z`.
    pub fn sample_joint(&self, q: &[T], z: &[f64]) -> Result<(T, Vec<T>)> {
        let jp = self.joint_posterior(q)?;
        let v = jp.sample(z)?;
        Ok((v[0], v[1..].to_vec()))
    }

    /// Conditions on observed value and gradient at `q`, given the joint
    /// posterior already computed at `q`.
    pub fn condition_on_joint(&self, q: &[T], jp: &JointPosterior<T>, observed: &[T]) -> Result<Self> {
        let p = self.dim() + 1;
        check_dim(p, observed.len())?;
        check_dim(self.dim(), q.len())?;
        let jittered;
        let factor = if jp.rank_deficient {
            jittered = cholesky_jittered(&jp.cov, p, JITTER_BASE * jp.amplitude)?.0;
            &jittered
        } else {
            &jp.factor
        };
        let mut z: Vec<T> = observed.iter().zip(&jp.mean).map(|(o, m)| *o - *m).collect();
        factor.forward_solve_in_place(&mut z);
        if z.iter().any(|v| !v.re().is_finite()) {
            return Err(Error::NotPositiveDefinite { jitter: 0.0 });
        }
        let mut next = self.clone();
        for a in 0..p {
            let mut row = jp.cross[a].clone();
            row.extend_from_slice(factor.row(a));
            next.rows.push(row);
        }
        next.u.extend(z);
        next.points.push(q.to_vec());
        next.values.push(observed[0]);
        next.grads.push(observed[1..].to_vec());
        Ok(next)
    }

    /// Conditions on `(f_val, grad_val)` observed at `q`.
    pub fn condition_with_gradient(&self, q: &[T], f_val: T, grad_val: &[T]) -> Result<Self> {
        let jp = self.joint_posterior(q)?;
        let mut obs = vec![f_val];
        obs.extend_from_slice(grad_val);
        self.condition_on_joint(q, &jp, &obs)
    }

    /// Samples at `q` with `z` and conditions on the draw.
    pub fn sample_and_condition(&self, q: &[T], z: &[f64]) -> Result<(Self, Vec<T>)> {
        let jp = self.joint_posterior(q)?;
        let v = jp.sample(z)?;
        let next = self.condition_on_joint(q, &jp, &v)?;
        Ok((next, v))
    }
}
