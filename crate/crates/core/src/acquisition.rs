//! Myopic acquisition functions for minimization: expected improvement
//! with spatial and data derivatives, probability of improvement and a
//! lower-confidence-bound style UCB.
//!
//! With `z = (f_best − μ − ξ)/σ` and `g(z) = zΦ(z) + φ(z)`, EI is `σ g(z)`.
//! Because `g − zΦ = φ`, the derivatives collapse to
//! `α_{,i} = σ_{,i} φ − Φ μ_{,i}` and
//! `α_{,ij} = σ_{,ij} φ − Φ μ_{,ij} + σ φ z_{,i} z_{,j}`.

use nalgebra::DMatrix;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gp::{DataDerivatives, GpState, PosteriorMoments};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Scalar pieces of expected improvement at one location.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EiQuantities {
    pub z: f64,
    pub g: f64,
    /// `g'(z) = Φ(z)`
    pub gp1: f64,
    /// `g''(z) = φ(z)`
    pub gp2: f64,
    pub xi: f64,
    pub value: f64,
}

impl EiQuantities {
    pub fn new(mean: f64, sd: f64, f_best: f64, xi: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::DegenerateVariance { variance: sd * sd });
        }
        let z = (f_best - mean - xi) / sd;
        let (cdf, pdf) = (norm_cdf(z), norm_pdf(z));
        // zΦ + φ loses everything to cancellation far in the left tail
        let g = (z * cdf + pdf).max(0.0);
        Ok(Self { z, g, gp1: cdf, gp2: pdf, xi, value: sd * g })
    }
}

fn first_order(m: &PosteriorMoments) -> Result<(&[f64], &[f64])> {
    match (&m.grad_mean, &m.grad_sd) {
        (Some(gm), Some(gs)) => Ok((gm, gs)),
        _ => Err(Error::InvalidArgument("moments lack first derivatives".into())),
    }
}

fn second_order(m: &PosteriorMoments) -> Result<(&DMatrix<f64>, &DMatrix<f64>)> {
    match (&m.hess_mean, &m.hess_sd) {
        (Some(hm), Some(hs)) => Ok((hm, hs)),
        _ => Err(Error::InvalidArgument("moments lack second derivatives".into())),
    }
}

/// Expected improvement; the `σ = 0` limit `max(f_best − μ − ξ, 0)` is
/// returned rather than an error.
pub fn ei(m: &PosteriorMoments, f_best: f64, xi: f64) -> f64 {
    if m.sd > 0.0 {
        EiQuantities::new(m.mean, m.sd, f_best, xi).map(|q| q.value).unwrap_or(0.0)
    } else {
        (f_best - m.mean - xi).max(0.0)
    }
}

/// `z_{,i} = σ⁻¹(−μ_{,i} − σ_{,i} z)`
fn z_grad(q: &EiQuantities, sd: f64, gm: &[f64], gs: &[f64]) -> Vec<f64> {
    gm.iter().zip(gs).map(|(mi, si)| (-mi - si * q.z) / sd).collect()
}

pub fn ei_grad(m: &PosteriorMoments, f_best: f64, xi: f64) -> Result<Vec<f64>> {
    let q = EiQuantities::new(m.mean, m.sd, f_best, xi)?;
    let (gm, gs) = first_order(m)?;
    Ok(gm.iter().zip(gs).map(|(mi, si)| si * q.gp2 - q.gp1 * mi).collect())
}

pub fn ei_hess(m: &PosteriorMoments, f_best: f64, xi: f64) -> Result<DMatrix<f64>> {
    let q = EiQuantities::new(m.mean, m.sd, f_best, xi)?;
    let (gm, gs) = first_order(m)?;
    let (hm, hs) = second_order(m)?;
    let zg = z_grad(&q, m.sd, gm, gs);
    let d = gm.len();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        hs[(i, j)] * q.gp2 - q.gp1 * hm[(i, j)] + m.sd * q.gp2 * zg[i] * zg[j]
    }))
}

/// Derivative of `(α, α_{,i})` along one data perturbation. `f_best_dot`
/// is 1 when the perturbed observation is the incumbent, else 0.
pub fn ei_mixed_data(
    m: &PosteriorMoments,
    dd: &DataDerivatives,
    f_best: f64,
    xi: f64,
    f_best_dot: f64,
) -> Result<(f64, Vec<f64>)> {
    let q = EiQuantities::new(m.mean, m.sd, f_best, xi)?;
    let (gm, gs) = first_order(m)?;
    let zg = z_grad(&q, m.sd, gm, gs);
    let z_dot = (f_best_dot - dd.mean - dd.sd * q.z) / m.sd;
    let alpha_dot = dd.sd * q.gp2 + q.gp1 * (f_best_dot - dd.mean);
    let grad = (0..gm.len())
        .map(|i| dd.grad_sd[i] * q.gp2 - q.gp1 * dd.grad_mean[i] + q.gp2 * z_dot * m.sd * zg[i])
        .collect();
    Ok((alpha_dot, grad))
}

/// Probability of improvement `Φ(z)`.
pub fn poi(m: &PosteriorMoments, f_best: f64, xi: f64) -> Result<f64> {
    Ok(EiQuantities::new(m.mean, m.sd, f_best, xi)?.gp1)
}

pub fn poi_grad(m: &PosteriorMoments, f_best: f64, xi: f64) -> Result<Vec<f64>> {
    let q = EiQuantities::new(m.mean, m.sd, f_best, xi)?;
    let (gm, gs) = first_order(m)?;
    Ok(z_grad(&q, m.sd, gm, gs).into_iter().map(|zi| q.gp2 * zi).collect())
}

/// `∂²Φ(z) = φ (z_{,ij} − z z_{,i} z_{,j})`
pub fn poi_hess(m: &PosteriorMoments, f_best: f64, xi: f64) -> Result<DMatrix<f64>> {
    let q = EiQuantities::new(m.mean, m.sd, f_best, xi)?;
    let (gm, gs) = first_order(m)?;
    let (hm, hs) = second_order(m)?;
    let zg = z_grad(&q, m.sd, gm, gs);
    let d = gm.len();
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let zij = (-hm[(i, j)] - hs[(i, j)] * q.z - gs[i] * zg[j] - gs[j] * zg[i]) / m.sd;
        q.gp2 * (zij - q.z * zg[i] * zg[j])
    }))
}

/// `−μ + √β σ`, maximized by the driver.
pub fn ucb(m: &PosteriorMoments, beta: f64) -> f64 {
    -m.mean + beta.sqrt() * m.sd
}

pub fn ucb_grad(m: &PosteriorMoments, beta: f64) -> Result<Vec<f64>> {
    let (gm, gs) = first_order(m)?;
    Ok(gm.iter().zip(gs).map(|(mi, si)| -mi + beta.sqrt() * si).collect())
}

pub fn ucb_hess(m: &PosteriorMoments, beta: f64) -> Result<DMatrix<f64>> {
    let (hm, hs) = second_order(m)?;
    Ok(-hm + hs * beta.sqrt())
}

/// A myopic acquisition function with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Acquisition {
    Ei { xi: f64 },
    Pi { xi: f64 },
    Ucb { beta: f64 },
}

/// Acquisition value with optional derivatives.
#[derive(Clone, Debug)]
pub struct AcqEval {
    pub value: f64,
    pub grad: Option<Vec<f64>>,
    pub hess: Option<DMatrix<f64>>,
    pub moments: PosteriorMoments,
}

impl Acquisition {
    pub fn value(&self, m: &PosteriorMoments, f_best: f64) -> f64 {
        match *self {
            Acquisition::Ei { xi } => ei(m, f_best, xi),
            Acquisition::Pi { xi } => {
                if m.sd > 0.0 {
                    norm_cdf((f_best - m.mean - xi) / m.sd)
                } else if f_best - m.mean - xi > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Acquisition::Ucb { beta } => ucb(m, beta),
        }
    }

    /// Value and derivatives up to `order` at `x` on `gp`. At points of zero
    /// posterior variance the derivatives are left empty.
    pub fn evaluate(&self, gp: &GpState, x: &[f64], f_best: f64, order: u8) -> Result<AcqEval> {
        let m = match gp.posterior(x, order) {
            Ok(m) => m,
            Err(Error::DegenerateVariance { .. }) => {
                let m = gp.posterior(x, 0)?;
                return Ok(AcqEval { value: self.value(&m, f_best), grad: None, hess: None, moments: m });
            }
            Err(e) => return Err(e),
        };
        let value = self.value(&m, f_best);
        let (grad, hess) = match order {
            0 => (None, None),
            _ => {
                let grad = match *self {
                    Acquisition::Ei { xi } => ei_grad(&m, f_best, xi)?,
                    Acquisition::Pi { xi } => poi_grad(&m, f_best, xi)?,
                    Acquisition::Ucb { beta } => ucb_grad(&m, beta)?,
                };
                let hess = if order >= 2 {
                    Some(match *self {
                        Acquisition::Ei { xi } => ei_hess(&m, f_best, xi)?,
                        Acquisition::Pi { xi } => poi_hess(&m, f_best, xi)?,
                        Acquisition::Ucb { beta } => ucb_hess(&m, beta)?,
                    })
                } else {
                    None
                };
                (Some(grad), hess)
            }
        };
        Ok(AcqEval { value, grad, hess, moments: m })
    }
}
