//! Matérn 5/2 kernel with ARD lengthscales and its first and second
//! spatial derivatives.
//!
//! The kernel is radial in the lengthscale-scaled difference
//! `r_k = (x_k - y_k) / ℓ_k`, `ρ = ‖r‖`:
//!
//! ```text
//! k(x, y) = ψ(ρ) = s (1 + √5ρ + 5ρ²/3) exp(-√5ρ)
//! ```
//!
//! Derivatives follow from the radial chain rule
//! `k_{,i} = ψ'(ρ) ρ⁻¹ r_i / ℓ_i` and
//! `k_{,ij} = [ψ''(ρ) - ρ⁻¹ψ'(ρ)] ρ⁻² (r_i/ℓ_i)(r_j/ℓ_j) + ρ⁻¹ψ'(ρ) δ_ij / ℓ_i²`.
//! For Matérn 5/2 both bracketed factors have closed forms that stay finite at
//! `ρ = 0`; below [`RHO_BRANCH`] the exact limits are used instead.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

const SQRT5: f64 = 2.236_067_977_499_79;

/// Scaled distances below this use the `ρ → 0` limit of the chain factors.
pub const RHO_BRANCH: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KernelKind {
    #[default]
    Matern52,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    amplitude: f64,
    lengthscales: Vec<f64>,
    kind: KernelKind,
}

impl KernelParams {
    pub fn new(amplitude: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude must be positive, got {amplitude}")));
        }
        if lengthscales.is_empty() {
            return Err(Error::InvalidArgument("at least one lengthscale is required".into()));
        }
        if let Some(l) = lengthscales.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidArgument(format!("lengthscales must be positive, got {l}")));
        }
        Ok(Self { amplitude, lengthscales, kind: KernelKind::Matern52 })
    }

    pub fn isotropic(amplitude: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(amplitude, vec![lengthscale; dim])
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Prior variance of the partial derivative `∂f/∂x_i`, i.e. `-k_{,ii}(0)`.
    pub fn gradient_prior_variance(&self, i: usize) -> f64 {
        5.0 * self.amplitude / (3.0 * self.lengthscales[i] * self.lengthscales[i])
    }
}

/// Radial profile `ψ(ρ)` and its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialProfile {
    pub psi: f64,
    pub dpsi: f64,
    pub ddpsi: f64,
}

impl RadialProfile {
    pub fn matern52(rho: f64, amplitude: f64) -> Self {
        let a = SQRT5 * rho;
        let e = (-a).exp();
        Self {
            psi: amplitude * (1.0 + a + a * a / 3.0) * e,
            dpsi: -(5.0 / 3.0) * amplitude * rho * (1.0 + a) * e,
            ddpsi: -(5.0 / 3.0) * amplitude * (1.0 + a - a * a) * e,
        }
    }

    /// `ρ⁻¹ψ'(ρ)` and `[ψ''(ρ) - ρ⁻¹ψ'(ρ)] ρ⁻²` evaluated from the profile.
    ///
    /// This is the direct chain-rule form; it loses precision as `ρ → 0`,
    /// where [`chain_factors`] switches to the analytic limits.
    pub fn chain_terms(&self, rho: f64) -> (f64, f64) {
        let first = self.dpsi / rho;
        (first, (self.ddpsi - first) / (rho * rho))
    }
}

/// `(ψ, ρ⁻¹ψ', [ψ'' - ρ⁻¹ψ']ρ⁻²)` at scaled distance `rho`.
#[inline]
pub(crate) fn chain_factors<T: Scalar>(rho: T, amplitude: f64) -> (T, T, T) {
    let rho = if rho.re() < RHO_BRANCH { T::zero() } else { rho };
    let a = rho * SQRT5;
    let e = (-a).exp() * amplitude;
    let psi = (a * a * (1.0 / 3.0) + a + 1.0) * e;
    let first = (a + 1.0) * e * (-5.0 / 3.0);
    let curvature = e * (25.0 / 3.0);
    (psi, first, curvature)
}

/// The `ρ → 0` limits of [`chain_factors`].
pub fn chain_limits(amplitude: f64) -> (f64, f64, f64) {
    (amplitude, -5.0 / 3.0 * amplitude, 25.0 / 3.0 * amplitude)
}

#[inline]
fn scaled_rho<T: Scalar>(params: &KernelParams, x: &[T], y: &[T]) -> T {
    let mut s = T::zero();
    for ((xi, yi), l) in x.iter().zip(y.iter()).zip(params.lengthscales.iter()) {
        let r = (*xi - *yi) / *l;
        s += r * r;
    }
    if s.re() < RHO_BRANCH * RHO_BRANCH {
        T::zero()
    } else {
        s.sqrt()
    }
}

/// Kernel value; no dimension checks.
#[inline]
pub(crate) fn value_unchecked<T: Scalar>(params: &KernelParams, x: &[T], y: &[T]) -> T {
    chain_factors(scaled_rho(params, x, y), params.amplitude).0
}

/// Kernel value and gradient with respect to `x`; no dimension checks.
#[inline]
pub(crate) fn value_grad_unchecked<T: Scalar>(
    params: &KernelParams,
    x: &[T],
    y: &[T],
    grad: &mut [T],
) -> T {
    let (psi, first, _) = chain_factors(scaled_rho(params, x, y), params.amplitude);
    for (i, g) in grad.iter_mut().enumerate() {
        let l = params.lengthscales[i];
        *g = first * (x[i] - y[i]) / (l * l);
    }
    psi
}

/// Kernel value, gradient and row-major Hessian with respect to `x`.
#[inline]
pub(crate) fn value_grad_hess_unchecked<T: Scalar>(
    params: &KernelParams,
    x: &[T],
    y: &[T],
    grad: &mut [T],
    hess: &mut [T],
) -> T {
    let d = params.dim();
    let (psi, first, curvature) = chain_factors(scaled_rho(params, x, y), params.amplitude);
    for i in 0..d {
        let li2 = params.lengthscales[i] * params.lengthscales[i];
        // r_i / ℓ_i with r_i already scaled: (x_i - y_i) / ℓ_i²
        let ui = (x[i] - y[i]) / li2;
        grad[i] = first * ui;
        for j in 0..=i {
            let lj2 = params.lengthscales[j] * params.lengthscales[j];
            let uj = (x[j] - y[j]) / lj2;
            let mut h = curvature * ui * uj;
            if i == j {
                h += first / li2;
            }
            hess[i * d + j] = h;
            hess[j * d + i] = h;
        }
    }
    psi
}

/// Derivatives of `k(x, y)` with respect to `(log s, log ℓ_1, …, log ℓ_d)`.
pub(crate) fn log_hyper_grad(params: &KernelParams, x: &[f64], y: &[f64], out: &mut [f64]) -> f64 {
    let (psi, first, _) = chain_factors(scaled_rho(params, x, y), params.amplitude);
    out[0] = psi;
    for (k, l) in params.lengthscales.iter().enumerate() {
        let r = (x[k] - y[k]) / l;
        out[k + 1] = -first * r * r;
    }
    psi
}

fn check_pair(x: &[f64], y: &[f64], params: &KernelParams) -> Result<()> {
    check_dim(params.dim(), x.len())?;
    check_dim(params.dim(), y.len())
}

/// Scaled distance `ρ` and the scaled difference vector `r`.
pub fn scaled_distance(x: &[f64], y: &[f64], params: &KernelParams) -> Result<(f64, Vec<f64>)> {
    check_pair(x, y, params)?;
    let r: Vec<f64> = x
        .iter()
        .zip(y)
        .zip(&params.lengthscales)
        .map(|((a, b), l)| (a - b) / l)
        .collect();
    let rho = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((rho, r))
}

pub fn eval(x: &[f64], y: &[f64], params: &KernelParams) -> Result<f64> {
    check_pair(x, y, params)?;
    Ok(value_unchecked(params, x, y))
}

/// Gradient `k_{,i}` with respect to the first argument.
pub fn grad(x: &[f64], y: &[f64], params: &KernelParams) -> Result<Vec<f64>> {
    check_pair(x, y, params)?;
    let mut g = vec![0.0; params.dim()];
    value_grad_unchecked(params, x, y, &mut g);
    Ok(g)
}

/// Hessian `k_{,ij}` with respect to the first argument.
pub fn hess(x: &[f64], y: &[f64], params: &KernelParams) -> Result<DMatrix<f64>> {
    check_pair(x, y, params)?;
    let d = params.dim();
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d * d];
    value_grad_hess_unchecked(params, x, y, &mut g, &mut h);
    Ok(DMatrix::from_row_slice(d, d, &h))
}
