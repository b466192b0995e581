//! Maximum-likelihood fitting of the kernel amplitude and lengthscales.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, GpState};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams};
use crate::linalg::dot_f64;

/// Box on every hyperparameter (amplitude and lengthscales), natural units.
pub const LOG_HYPER_BOUNDS: (f64, f64) = (1e-3, 1e3);

#[derive(Clone, Debug)]
pub struct HyperFitOptions {
    /// Random starts in addition to the default and warm starts.
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub warm_start: Option<KernelParams>,
}

impl Default for HyperFitOptions {
    fn default() -> Self {
        Self { restarts: 4, max_iters: 200, seed: 0, warm_start: None }
    }
}

fn params_from_log(theta: &[f64]) -> KernelParams {
    KernelParams::new(theta[0].exp(), theta[1..].iter().map(|t| t.exp()).collect())
        .expect("exp of a finite value is positive")
}

/// Log marginal likelihood of `data` (used as given, zero prior mean) and
/// its gradient with respect to `(log s, log ℓ_1, …, log ℓ_d)`.
pub fn log_marginal_likelihood(
    data: &Dataset,
    params: &KernelParams,
    noise: f64,
) -> Result<(f64, Vec<f64>)> {
    let gp = GpState::fit(data, params.clone(), noise)?;
    let n = data.len();
    let d = data.dim();
    let alpha = gp.weights();
    let value = -0.5 * dot_f64(data.y(), alpha)
        - gp.chol().half_log_det()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    // A⁻¹ column by column
    let mut inv = vec![0.0; n * n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        gp.chol().solve_in_place(&mut e);
        for i in 0..n {
            inv[i * n + j] = e[i];
        }
    }
    let mut grad = vec![0.0; d + 1];
    let mut dk = vec![0.0; d + 1];
    for i in 0..n {
        for j in 0..=i {
            let wgt = alpha[i] * alpha[j] - inv[i * n + j];
            let factor = if i == j { 0.5 } else { 1.0 };
            kernel::log_hyper_grad(params, data.point(i), data.point(j), &mut dk);
            for (g, v) in grad.iter_mut().zip(&dk) {
                *g += factor * wgt * v;
            }
        }
    }
    Ok((value, grad))
}

fn project(theta: &mut [f64], lo: f64, hi: f64) {
    for t in theta.iter_mut() {
        *t = t.clamp(lo, hi);
    }
}

/// Projected gradient ascent with Barzilai-Borwein steps and Armijo
/// backtracking, in log space.
fn ascend(data: &Dataset, noise: f64, start: Vec<f64>, max_iters: usize) -> Option<(f64, Vec<f64>)> {
    let (lo, hi) = (LOG_HYPER_BOUNDS.0.ln(), LOG_HYPER_BOUNDS.1.ln());
    let eval = |t: &[f64]| log_marginal_likelihood(data, &params_from_log(t), noise).ok();
    let mut theta = start;
    project(&mut theta, lo, hi);
    let (mut f, mut g) = eval(&theta)?;
    let mut step = 0.1;
    for _ in 0..max_iters {
        let mut accepted = None;
        let mut t = step;
        for _ in 0..30 {
            let mut cand: Vec<f64> = theta.iter().zip(&g).map(|(x, gi)| x + t * gi).collect();
            project(&mut cand, lo, hi);
            let moved: f64 = cand.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
            if let Some((fc, gc)) = eval(&cand) {
                // sufficient increase along the projected arc
                if fc >= f + 1e-4 * moved / t {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| b - a).collect();
        let sy = dot_f64(&s, &yv);
        let ss = dot_f64(&s, &s);
        step = if sy > 1e-16 { (ss / sy).clamp(1e-4, 1e2) } else { (2.0 * t).min(1e2) };
        let improvement = fc - f;
        theta = cand;
        f = fc;
        g = gc;
        let pg: f64 = theta
            .iter()
            .zip(&g)
            .map(|(x, gi)| {
                let mut c = x + gi;
                c = c.clamp(lo, hi);
                (c - x).abs()
            })
            .fold(0.0, f64::max);
        if pg < 1e-6 || improvement.abs() < 1e-12 * f.abs().max(1.0) {
            break;
        }
    }
    Some((f, theta))
}

/// Multistart maximum-likelihood fit. `y` is centered by its mean before
/// fitting; `noise_floor` is used as the fixed observation variance.
pub fn fit_hypers(data: &Dataset, noise_floor: f64, opts: &HyperFitOptions) -> Result<KernelParams> {
    let m = data.len();
    let d = data.dim();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("hyperparameter fit needs m >= 2, got {m}")));
    }
    let mean = data.y().iter().sum::<f64>() / m as f64;
    let centered_y: Vec<f64> = data.y().iter().map(|v| v - mean).collect();
    let pts: Vec<Vec<f64>> = (0..m).map(|i| data.point(i).to_vec()).collect();
    let centered = Dataset::new(d, &pts, &centered_y)?;

    let var = centered_y.iter().map(|v| v * v).sum::<f64>() / m as f64;
    let ranges: Vec<f64> = (0..d)
        .map(|k| {
            let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                (a.min(p[k]), b.max(p[k]))
            });
            if hi > lo { hi - lo } else { 1.0 }
        })
        .collect();
    let log_var = var.max(LOG_HYPER_BOUNDS.0).ln();

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = &opts.warm_start {
        let mut t = vec![w.amplitude().ln()];
        t.extend(w.lengthscales().iter().map(|l| l.ln()));
        starts.push(t);
    }
    let mut t = vec![log_var];
    t.extend(ranges.iter().map(|r| (0.3 * r).ln()));
    starts.push(t);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        let mut t = vec![log_var + rng.random_range(-2.0..2.0)];
        t.extend(ranges.iter().map(|r| r.ln() + rng.random_range((0.02f64).ln()..(2.0f64).ln())));
        starts.push(t);
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in starts {
        if let Some((f, theta)) = ascend(&centered, noise_floor, s, opts.max_iters) {
            if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
                best = Some((f, theta));
            }
        }
    }
    match best {
        Some((_, theta)) => Ok(params_from_log(&theta)),
        None => Err(Error::NotPositiveDefinite { jitter: f64::NAN }),
    }
}
