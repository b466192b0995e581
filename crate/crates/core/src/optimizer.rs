//! Inner deterministic maximization (projected Newton, multistart) and the
//! outer Adam ascent over the rollout acquisition.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Bounds;
use crate::error::{check_dim, Error, Result};
use crate::gp::GpState;
use crate::rollout::{rollout_estimate, rollout_value_and_grad, RolloutConfig};
use crate::sampler::mix64;

/// Value with optional first and second derivatives.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Option<Vec<f64>>,
    pub hess: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerOptConfig {
    pub restarts: usize,
    pub grad_tol: f64,
    pub max_newton_iters: usize,
    /// Uniform candidates screened by value before the Newton starts.
    pub screening: usize,
    /// Newton iterations stop once a step is below `step_tol · width`.
    pub step_tol: f64,
}

impl Default for InnerOptConfig {
    fn default() -> Self {
        Self { restarts: 8, grad_tol: 1e-3, max_newton_iters: 50, screening: 64, step_tol: 1e-12 }
    }
}

impl InnerOptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.restarts == 0 || self.max_newton_iters == 0 {
            return Err(Error::InvalidArgument(format!("invalid inner optimizer config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    /// `‖∇‖∞ ≤ grad_tol` over the coordinates not pinned to the box.
    pub stationary: bool,
    /// Coordinates held at a bound with the gradient pointing outward.
    pub pinned: Vec<bool>,
    pub iterations: usize,
}

impl InnerResult {
    pub fn any_pinned(&self) -> bool {
        self.pinned.iter().any(|p| *p)
    }
}

fn pinned_set(x: &[f64], g: &[f64], bounds: &Bounds) -> Vec<bool> {
    (0..x.len())
        .map(|k| (x[k] <= bounds.lower()[k] && g[k] < 0.0) || (x[k] >= bounds.upper()[k] && g[k] > 0.0))
        .collect()
}

fn free_grad_norm(g: &[f64], pinned: &[bool]) -> f64 {
    g.iter().zip(pinned).filter(|(_, p)| !**p).map(|(v, _)| v.abs()).fold(0.0, f64::max)
}

/// Ascent direction from an eigenvalue-shifted Newton model on the free
/// coordinates; pinned coordinates get a zero step.
fn newton_direction(g: &[f64], h: &DMatrix<f64>, pinned: &[bool]) -> Vec<f64> {
    let free: Vec<usize> = (0..g.len()).filter(|k| !pinned[*k]).collect();
    let mut p = vec![0.0; g.len()];
    if free.is_empty() {
        return p;
    }
    let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
    let gf = DVector::from_iterator(free.len(), free.iter().map(|k| g[*k]));
    let eig = SymmetricEigen::new(-hf);
    let scale = eig.eigenvalues.amax().max(1.0);
    let floor = 1e-8 * scale;
    let mut coef = eig.eigenvectors.transpose() * gf;
    for (c, lam) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= lam.abs().max(floor);
    }
    let step = eig.eigenvectors * coef;
    for (a, k) in free.iter().enumerate() {
        p[*k] = step[a];
    }
    p
}

/// Multistart projected Newton maximization over `bounds`.
///
/// `objective(x, order)` must return derivatives up to `order`; points where
/// it cannot (for example zero posterior variance) are abandoned as starts.
pub fn inner_maximize<F, R>(mut objective: F, bounds: &Bounds, cfg: &InnerOptConfig, rng: &mut R) -> Result<InnerResult>
where
    F: FnMut(&[f64], u8) -> Result<Evaluation>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let d = bounds.dim();
    let n_screen = cfg.screening.max(cfg.restarts);
    let mut candidates: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n_screen);
    for _ in 0..n_screen {
        let x = bounds.sample_uniform(rng);
        let v = objective(&x, 0)?.value;
        candidates.push((if v.is_finite() { v } else { f64::NEG_INFINITY }, x));
    }
    // stable sort keeps draw order among ties
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let width_min = (0..d).map(|k| bounds.width(k)).fold(f64::INFINITY, f64::min);

    let mut best: Option<InnerResult> = None;
    // certified stationary points found so far; a start that reaches one of
    // them would only repeat that solve
    let mut found: Vec<Vec<f64>> = Vec::new();
    let near = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 1e-6 * width_min);
    for (_, start) in candidates.into_iter().take(cfg.restarts) {
        let mut x = start;
        let mut e = objective(&x, 2)?;
        let mut iterations = 0;
        let mut last_step = f64::INFINITY;
        while iterations < cfg.max_newton_iters {
            let (Some(g), Some(h)) = (e.grad.clone(), e.hess.clone()) else { break };
            let pinned = pinned_set(&x, &g, bounds);
            if free_grad_norm(&g, &pinned) <= cfg.grad_tol && last_step <= cfg.step_tol * width_min {
                break;
            }
            if iterations > 0 && found.iter().any(|f| near(f, &x)) {
                break;
            }
            let p = newton_direction(&g, &h, &pinned);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
                bounds.project(&mut xn);
                let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dir: f64 = dx.iter().zip(&g).map(|(a, b)| a * b).sum();
                let en = objective(&xn, 2)?;
                let tiny = dx.iter().all(|v| v.abs() <= cfg.step_tol * width_min);
                if en.value.is_finite() && (tiny || en.value >= e.value + 1e-4 * dir.max(0.0)) {
                    accepted = Some((xn, en, dx));
                    break;
                }
                t *= 0.5;
            }
            iterations += 1;
            let Some((xn, en, dx)) = accepted else { break };
            last_step = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            x = xn;
            e = en;
            if last_step == 0.0 {
                break;
            }
        }
        let (grad, stationary, pinned) = match &e.grad {
            Some(g) => {
                let pinned = pinned_set(&x, g, bounds);
                (g.clone(), free_grad_norm(g, &pinned) <= cfg.grad_tol, pinned)
            }
            None => (vec![0.0; d], false, vec![false; d]),
        };
        if stationary && !found.iter().any(|f| near(f, &x)) {
            found.push(x.clone());
        }
        let cand = InnerResult { x, value: e.value, grad, stationary, pinned, iterations };
        let better = match &best {
            None => true,
            Some(b) => {
                // prefer certified stationary points among near-equal values
                cand.value > b.value + 1e-12 * b.value.abs().max(1e-300)
                    || (!b.stationary && cand.stationary && cand.value >= b.value - 1e-12 * b.value.abs())
            }
        };
        if better {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::Optimizer("no inner start evaluated".into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// `None` selects `0.1 · diag(Ω) / √d`.
    pub step_size: Option<f64>,
    pub max_iters: usize,
    pub restarts: usize,
    pub grad_tol: f64,
    /// Consecutive small-gradient iterations required to stop.
    pub patience: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_size: None,
            max_iters: 50,
            restarts: 8,
            grad_tol: 1e-3,
            patience: 3,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.step_size.is_none_or(|s| s > 0.0)
            && self.max_iters >= 1
            && self.restarts >= 1
            && self.grad_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam config {self:?}")))
        }
    }

    pub fn step_for(&self, bounds: &Bounds) -> f64 {
        self.step_size.unwrap_or(0.1 * bounds.diagonal() / (bounds.dim() as f64).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamResult {
    pub x: Vec<f64>,
    /// Objective estimate at `x` (from the last evaluation there).
    pub value: f64,
    pub iterations: usize,
    /// The run stopped on a non-finite value or gradient.
    pub aborted: bool,
    /// Stopped by the small-gradient rule rather than the iteration cap.
    pub converged: bool,
}

/// Projected Adam ascent from `x0`.
///
/// `objective(x)` returns `(value, grad)`. On a non-finite evaluation the run
/// stops and returns the best finite iterate seen.
pub fn adam_maximize<F>(mut objective: F, x0: &[f64], cfg: &AdamConfig, bounds: &Bounds) -> Result<AdamResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    check_dim(bounds.dim(), x0.len())?;
    let d = x0.len();
    let alpha = cfg.step_for(bounds);
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut m = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut small = 0;
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for t in 1..=cfg.max_iters {
        let (value, g) = objective(&x)?;
        check_dim(d, g.len())?;
        if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
            let (value, x) = best.unwrap_or((f64::NEG_INFINITY, x));
            return Ok(AdamResult { x, value, iterations: t - 1, aborted: true, converged: false });
        }
        if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
            best = Some((value, x.clone()));
        }
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        small = if gmax <= cfg.grad_tol { small + 1 } else { 0 };
        if small >= cfg.patience {
            return Ok(AdamResult { x, value, iterations: t, aborted: false, converged: true });
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for k in 0..d {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let mh = m[k] / (1.0 - b1t);
            let vh = v[k] / (1.0 - b2t);
            x[k] += alpha * mh / (vh.sqrt() + cfg.epsilon);
        }
        bounds.project(&mut x);
        if t == cfg.max_iters {
            // report the objective at the returned iterate
            let (value, g) = objective(&x)?;
            if value.is_finite() && g.iter().all(|v| v.is_finite()) {
                return Ok(AdamResult { x, value, iterations: t, aborted: false, converged: false });
            }
            let (value, x) = best.unwrap_or((f64::NEG_INFINITY, x));
            return Ok(AdamResult { x, value, iterations: t, aborted: true, converged: false });
        }
    }
    unreachable!("max_iters >= 1 returns inside the loop")
}

/// Outcome of one outer restart.
#[derive(Clone, Debug, PartialEq)]
pub struct RestartOutcome {
    pub start: Vec<f64>,
    pub adam: AdamResult,
    /// Re-evaluation of the final iterate with twice the samples.
    pub final_value: f64,
    pub final_se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub value: f64,
    pub value_se: f64,
    pub restarts: Vec<RestartOutcome>,
}

/// Next evaluation point: `adam.restarts` projected Adam ascents of the
/// rollout estimate, started from the base policy's argmax and from uniform
/// points, compared by a re-evaluation with
/// `2N` samples. With CRN on, one stream seeded by `seed` is shared by
/// every evaluation; otherwise each evaluation draws a fresh stream.
pub fn propose_next(gp: &Arc<GpState>, cfg: &RolloutConfig, adam: &AdamConfig, seed: u64) -> Result<Proposal> {
    cfg.validate()?;
    adam.validate()?;
    let bounds = &cfg.bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // the base policy's own choice is always one of the starts
    let f_best = gp.f_best();
    let policy = cfg.base_policy;
    let base_choice = inner_maximize(
        |x, order| {
            let e = policy.evaluate(gp, x, f_best, order)?;
            Ok(Evaluation { value: e.value, grad: e.grad, hess: e.hess })
        },
        bounds,
        &cfg.inner,
        &mut rng,
    )?;
    let mut starts = vec![base_choice.x];
    starts.extend((1..adam.restarts).map(|_| bounds.sample_uniform(&mut rng)));
    let shared = cfg.stream(seed)?;
    let final_stream = cfg.stream_with(seed, 2 * cfg.n_samples)?;
    let mut restarts = Vec::with_capacity(starts.len());
    for (r, start) in starts.into_iter().enumerate() {
        let mut calls = 0u64;
        let adam_res = adam_maximize(
            |x| {
                calls += 1;
                let est = if cfg.variance_reduction.crn {
                    rollout_value_and_grad(gp, x, cfg, &shared)?
                } else {
                    let s = cfg.stream(mix64(seed ^ mix64(((r as u64) << 32) | calls)))?;
                    rollout_value_and_grad(gp, x, cfg, &s)?
                };
                Ok((est.value, est.grad))
            },
            &start,
            adam,
            bounds,
        )?;
        let fin = rollout_estimate(gp, &adam_res.x, cfg, &final_stream, false)?;
        restarts.push(RestartOutcome { start, adam: adam_res, final_value: fin.value, final_se: fin.value_se });
    }
    let best = (0..restarts.len())
        .fold(0, |b, r| if restarts[r].final_value > restarts[b].final_value { r } else { b });
    let w = &restarts[best];
    Ok(Proposal { x: w.adam.x.clone(), value: w.final_value, value_se: w.final_se, restarts })
}
