//! Derivatives of the posterior moments with respect to one fantasy
//! observation's value and location.

use super::{GpState, PosteriorMoments};
use crate::error::{check_dim, Error, Result};
use crate::kernel;
use crate::linalg::dot_f64;

/// `(μ̇, σ̇, μ̇_{,i}, σ̇_{,i})` for a single perturbation direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DataDerivatives {
    pub mean: f64,
    pub sd: f64,
    pub grad_mean: Vec<f64>,
    pub grad_sd: Vec<f64>,
}

/// Perturbation direction of a fantasy observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Perturbation {
    Value,
    Location(usize),
}

/// Data derivatives for observation `j`: the value perturbation and one
/// entry per location coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationDerivatives {
    pub value: DataDerivatives,
    pub location: Vec<DataDerivatives>,
}

impl ObservationDerivatives {
    pub fn get(&self, p: Perturbation) -> &DataDerivatives {
        match p {
            Perturbation::Value => &self.value,
            Perturbation::Location(k) => &self.location[k],
        }
    }
}

impl GpState {
    /// Data derivatives at `x` for fantasy observation `j`, computing the
    /// order-2 moments internally.
    pub fn posterior_data_derivatives(&self, x: &[f64], j: usize) -> Result<ObservationDerivatives> {
        let m = self.posterior(x, 2)?;
        self.data_derivatives(x, &m, j)
    }

    /// Data derivatives at `x` for fantasy observation `j`, reusing the
    /// solved workspace of order-2 `moments` computed at the same `x`.
    pub fn data_derivatives(
        &self,
        x: &[f64],
        moments: &PosteriorMoments,
        j: usize,
    ) -> Result<ObservationDerivatives> {
        check_dim(self.dim, x.len())?;
        if j >= self.len() {
            return Err(Error::InvalidArgument(format!("observation {j} out of range")));
        }
        if !self.fantasy[j] {
            return Err(Error::ImmutableObservation { index: j });
        }
        let (Some(dv), Some(w), Some(sd_grad)) = (
            moments.solved_kernel.as_ref(),
            moments.solved_kernel_grads.as_ref(),
            moments.grad_sd.as_ref(),
        ) else {
            return Err(Error::InvalidArgument("data derivatives need order-2 moments".into()));
        };
        let d = self.dim;
        let n = self.len();
        let sd = moments.sd;
        let c = &self.c;
        let p = self.point(j);

        let value = DataDerivatives {
            mean: dv[j],
            sd: 0.0,
            grad_mean: w.iter().map(|wi| wi[j]).collect(),
            grad_sd: vec![0.0; d],
        };

        // k_{,k}(x, p) and k_{,ik}(x, p)
        let mut kg = vec![0.0; d];
        let mut kh = vec![0.0; d * d];
        kernel::value_grad_hess_unchecked(&self.params, x, p, &mut kg, &mut kh);
        // G[l][k] = k_{,k}(p, x_l), zero for l = j
        let mut gmat = vec![0.0; n * d];
        let mut tmp = vec![0.0; d];
        for l in 0..n {
            if l != j {
                kernel::value_grad_unchecked(&self.params, p, self.point(l), &mut tmp);
                gmat[l * d..(l + 1) * d].copy_from_slice(&tmp);
            }
        }

        let mut location = Vec::with_capacity(d);
        let mut g = vec![0.0; n];
        for k in 0..d {
            for l in 0..n {
                g[l] = gmat[l * d + k];
            }
            let e = -kg[k];
            let gc = dot_f64(&g, c);
            let gd = dot_f64(&g, dv);
            let mean = e * c[j] - (dv[j] * gc + c[j] * gd);
            let sd_dot = (-e * dv[j] + dv[j] * gd) / sd;
            let mut grad_mean = vec![0.0; d];
            let mut grad_sd = vec![0.0; d];
            for i in 0..d {
                let ei = -kh[i * d + k];
                let gw = dot_f64(&g, &w[i]);
                let wj = w[i][j];
                grad_mean[i] = ei * c[j] - (wj * gc + c[j] * gw);
                let q_dot = ei * dv[j] + wj * e - (wj * gd + dv[j] * gw);
                grad_sd[i] = -(q_dot + sd_grad[i] * sd_dot) / sd;
            }
            location.push(DataDerivatives { mean, sd: sd_dot, grad_mean, grad_sd });
        }
        Ok(ObservationDerivatives { value, location })
    }

    /// Copy of the state with fantasy observation `j` replaced by
    /// `(x_new, y_new)`, refactorized from scratch. Used by derivative
    /// oracles and diagnostics.
    pub fn with_fantasy_replaced(&self, j: usize, x_new: &[f64], y_new: f64) -> Result<Self> {
        check_dim(self.dim, x_new.len())?;
        if !self.fantasy[j] {
            return Err(Error::ImmutableObservation { index: j });
        }
        let mut x = self.x.clone();
        let mut y = self.y.clone();
        x[j * self.dim..(j + 1) * self.dim].copy_from_slice(x_new);
        y[j] = y_new;
        let mut noise_diag = self.noise_diag.clone();
        for v in noise_diag.iter_mut() {
            *v += self.jitter;
        }
        Self::factorize(
            self.params.clone(),
            self.noise,
            self.dim,
            x,
            y,
            noise_diag,
            self.fantasy.clone(),
            0,
        )
    }
}
