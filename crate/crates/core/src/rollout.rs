//! Rollout acquisition: sampled `h`-step trajectories of the base policy,
//! their derivatives with respect to the start point, and the Monte Carlo
//! estimator with its variance reduction.
//!
//! Each trajectory runs two fantasy models side by side. `F` is a
//! [`GpState`] conditioned on fantasy values only; the base policy is
//! maximized on it. `G` is a [`FantasyGp`] conditioned on values and
//! gradients; the fantasy draws come from it. The `G` chain is evaluated in
//! forward mode, so every draw carries its total derivative with respect to
//! the start point, and the argmax locations are differentiated with the
//! implicit function theorem on `F`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acquisition::{ei, ei_hess, ei_mixed_data, Acquisition};
use crate::domain::Bounds;
use crate::error::{check_dim, Error, Result};
use crate::gp::{FantasyGp, GpState, JointPosterior};
use crate::optimizer::{inner_maximize, Evaluation, InnerOptConfig};
use crate::sampler::{mix64, GaussianStream, QmcStream, SampleMode};
use crate::scalar::{Dual, Scalar, MAX_DUAL_DIM};

/// Condition number of the free inner Hessian above which a trajectory is
/// excluded from the gradient average.
pub const MAX_HESSIAN_CONDITION: f64 = 1e12;

/// Variance of the control variate below which it is switched off.
pub const CV_MIN_VARIANCE: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarianceReduction {
    pub qmc: bool,
    pub crn: bool,
    pub control_variate: bool,
}

impl Default for VarianceReduction {
    fn default() -> Self {
        Self { qmc: true, crn: true, control_variate: true }
    }
}

impl VarianceReduction {
    pub fn none() -> Self {
        Self { qmc: false, crn: false, control_variate: false }
    }
}

/// How a trajectory's best value is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientEstimator {
    /// Total derivative of the reparameterized draw `f̂_b(x)` under fixed
    /// Gaussian inputs. This is the derivative of the CRN estimate itself.
    #[default]
    Pathwise,
    /// `∇f̂_b · ∂x^b/∂x`: the sampled gradient at the best point, chained
    /// through the argmax Jacobian. Available for any dimension.
    SamplePath,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub n_samples: usize,
    /// Base policy rolled forward; only EI has mixed data derivatives.
    pub base_policy: Acquisition,
    pub variance_reduction: VarianceReduction,
    pub inner: InnerOptConfig,
    pub bounds: Bounds,
    pub estimator: GradientEstimator,
    /// Gradient evaluations fail when more than this fraction of
    /// trajectories is flagged.
    pub max_flagged_fraction: f64,
}

impl RolloutConfig {
    pub fn new(bounds: Bounds, horizon: usize, n_samples: usize) -> Self {
        Self {
            horizon,
            n_samples,
            base_policy: Acquisition::Ei { xi: 0.0 },
            variance_reduction: VarianceReduction::default(),
            inner: InnerOptConfig::default(),
            bounds,
            estimator: GradientEstimator::default(),
            max_flagged_fraction: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("rollout needs at least one sample".into()));
        }
        if !matches!(self.base_policy, Acquisition::Ei { .. }) {
            return Err(Error::InvalidArgument("the rollout base policy must be EI".into()));
        }
        if !(0.0..=1.0).contains(&self.max_flagged_fraction) {
            return Err(Error::InvalidArgument("max_flagged_fraction must lie in [0, 1]".into()));
        }
        self.inner.validate()
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn xi(&self) -> f64 {
        match self.base_policy {
            Acquisition::Ei { xi } => xi,
            _ => 0.0,
        }
    }

    /// Gaussian coordinates consumed per step: one value and `d` gradient
    /// components.
    pub fn block(&self) -> usize {
        self.dim() + 1
    }

    /// Width of one stream row: the start draw plus one block per step.
    pub fn stream_width(&self) -> usize {
        (self.horizon + 1) * self.block()
    }

    pub fn sample_mode(&self) -> SampleMode {
        if self.variance_reduction.qmc {
            SampleMode::Sobol
        } else {
            SampleMode::Pseudorandom
        }
    }

    /// The Gaussian stream for `n_samples` trajectories seeded by `seed`.
    pub fn stream(&self, seed: u64) -> Result<CrnStream> {
        self.stream_with(seed, self.n_samples)
    }

    pub fn stream_with(&self, seed: u64, n: usize) -> Result<CrnStream> {
        let z = QmcStream::new(self.stream_width(), n, seed, self.sample_mode())?.gaussian()?;
        Ok(CrnStream { seed, z })
    }
}

/// Gaussian inputs for a batch of trajectories. The seed also drives the
/// screening points of every inner maximization, so reusing one stream
/// across start points fixes all randomness of the estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct CrnStream {
    seed: u64,
    z: GaussianStream,
}

impl CrnStream {
    pub fn new(seed: u64, z: GaussianStream) -> Self {
        Self { seed, z }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn gaussian(&self) -> &GaussianStream {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Seed of the inner maximizations of sample `i`.
    pub fn inner_seed(&self, i: usize) -> u64 {
        mix64(self.seed ^ mix64(0x5EED_0000 + i as u64))
    }
}

fn step_seed(inner_seed: u64, step: usize) -> u64 {
    mix64(inner_seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Why a trajectory was excluded from the gradient average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrajectoryFlag {
    NonStationary { step: usize },
    IllConditioned { step: usize, condition: f64 },
    DegenerateVariance { step: usize },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `x^j`, starting with the rollout start point.
    pub points: Vec<Vec<f64>>,
    /// `f̂_j`
    pub values: Vec<f64>,
    /// `∇f̂_j`
    pub grads: Vec<Vec<f64>>,
    /// `∂x^j/∂x`, row `k` holding the derivative of coordinate `k`. Empty
    /// when the trajectory was sampled without derivatives.
    pub jacobians: Vec<DMatrix<f64>>,
    /// `df̂_j/dx` as used by the estimator (see [`GradientEstimator`]).
    pub value_sens: Vec<Vec<f64>>,
    /// Inner solutions pinned to the box, per coordinate.
    pub pinned: Vec<Vec<bool>>,
    pub flag: Option<TrajectoryFlag>,
    /// `F_0, …, F_{h−1}`: the values-only fantasy model after each step.
    pub gp_seq: Vec<GpState>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn has_jacobians(&self) -> bool {
        !self.jacobians.is_empty()
    }
}

/// Scalars that can carry a tangent with respect to the start point.
trait Tangent: Scalar {
    const TRACKS: bool;
    fn seeded(re: f64, tangent: &[f64]) -> Self;
    fn tangent(&self, d: usize) -> Vec<f64>;
}

impl Tangent for f64 {
    const TRACKS: bool = false;

    fn seeded(re: f64, _: &[f64]) -> Self {
        re
    }

    fn tangent(&self, d: usize) -> Vec<f64> {
        vec![0.0; d]
    }
}

impl<const N: usize> Tangent for Dual<N> {
    const TRACKS: bool = true;

    fn seeded(re: f64, tangent: &[f64]) -> Self {
        let mut eps = [0.0; N];
        eps.copy_from_slice(tangent);
        Dual::new(re, eps)
    }

    fn tangent(&self, _: usize) -> Vec<f64> {
        self.eps.to_vec()
    }
}

/// Runs `$body` with `$t` bound to `Dual<d>`.
macro_rules! with_dual {
    ($d:expr, $t:ident => $body:expr) => {
        match $d {
            1 => {
                type $t = Dual<1>;
                $body
            }
            2 => {
                type $t = Dual<2>;
                $body
            }
            3 => {
                type $t = Dual<3>;
                $body
            }
            4 => {
                type $t = Dual<4>;
                $body
            }
            5 => {
                type $t = Dual<5>;
                $body
            }
            6 => {
                type $t = Dual<6>;
                $body
            }
            7 => {
                type $t = Dual<7>;
                $body
            }
            8 => {
                type $t = Dual<8>;
                $body
            }
            d => Err(Error::UnsupportedDimension { dim: d, max: MAX_DUAL_DIM }),
        }
    };
}

/// Shared per-batch data: the start point and the joint posterior there.
struct Start<T: Scalar> {
    q: Vec<T>,
    root: FantasyGp<T>,
    joint: JointPosterior<T>,
}

impl<T: Tangent> Start<T> {
    fn new(gp: &Arc<GpState>, x0: &[f64]) -> Result<Self> {
        let d = x0.len();
        let q: Vec<T> = (0..d)
            .map(|k| {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                T::seeded(x0[k], &e)
            })
            .collect();
        let root = FantasyGp::new(gp.clone());
        let joint = root.joint_posterior(&q)?;
        Ok(Self { q, root, joint })
    }
}

/// `∂x^r/∂x` by the implicit function theorem on `∇ᾱ(x^r | F_{r−1}) = 0`,
/// or the flag that prevents it. Pinned coordinates get zero rows.
#[allow(clippy::too_many_arguments)]
fn step_jacobian(
    f: &GpState,
    xr: &[f64],
    pinned: &[bool],
    f_best: f64,
    xi: f64,
    n_obs: usize,
    traj: &Trajectory,
    step: usize,
) -> Result<std::result::Result<DMatrix<f64>, TrajectoryFlag>> {
    let d = xr.len();
    let degenerate = Err(TrajectoryFlag::DegenerateVariance { step });
    let m = match f.posterior(xr, 2) {
        Ok(m) => m,
        Err(Error::DegenerateVariance { .. }) => return Ok(degenerate),
        Err(e) => return Err(e),
    };
    let h = match ei_hess(&m, f_best, xi) {
        Ok(h) => h,
        Err(Error::DegenerateVariance { .. }) => return Ok(degenerate),
        Err(e) => return Err(e),
    };
    let free: Vec<usize> = (0..d).filter(|k| !pinned[*k]).collect();
    let mut jac = DMatrix::zeros(d, d);
    if free.is_empty() {
        return Ok(Ok(jac));
    }
    let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
    let eig = SymmetricEigen::new(hff);
    let lmax = eig.eigenvalues.amax();
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= MAX_HESSIAN_CONDITION) {
        return Ok(Err(TrajectoryFlag::IllConditioned { step, condition }));
    }

    // mixed block ∂∇ᾱ/∂x through every earlier fantasy's value and location
    let ys = f.y();
    let incumbent = (0..ys.len()).fold(0, |b, i| if ys[i] < ys[b] { i } else { b });
    let mut mixed = DMatrix::zeros(d, d);
    for j in 0..step {
        let idx = n_obs + j;
        let od = match f.data_derivatives(xr, &m, idx) {
            Ok(od) => od,
            Err(Error::DegenerateVariance { .. }) => return Ok(degenerate),
            Err(e) => return Err(e),
        };
        let fb_dot = if incumbent == idx { 1.0 } else { 0.0 };
        let (_, gv) = ei_mixed_data(&m, &od.value, f_best, xi, fb_dot)?;
        for c in 0..d {
            let t = traj.value_sens[j][c];
            for a in 0..d {
                mixed[(a, c)] += gv[a] * t;
            }
        }
        for k in 0..d {
            let (_, gk) = ei_mixed_data(&m, &od.location[k], f_best, xi, 0.0)?;
            for c in 0..d {
                let t = traj.jacobians[j][(k, c)];
                if t != 0.0 {
                    for a in 0..d {
                        mixed[(a, c)] += gk[a] * t;
                    }
                }
            }
        }
    }
    let mf = DMatrix::from_fn(free.len(), d, |a, c| mixed[(free[a], c)]);
    let mut coef = eig.eigenvectors.transpose() * mf;
    for (a, lam) in eig.eigenvalues.iter().enumerate() {
        let mut row = coef.row_mut(a);
        row /= *lam;
    }
    let jf = -(&eig.eigenvectors * coef);
    for (a, k) in free.iter().enumerate() {
        jac.set_row(*k, &jf.row(a));
    }
    Ok(Ok(jac))
}

fn simulate<T: Tangent>(
    gp: &Arc<GpState>,
    start: &Start<T>,
    cfg: &RolloutConfig,
    row: &[f64],
    inner_seed: u64,
    with_jacobians: bool,
) -> Result<Trajectory> {
    let d = gp.dim();
    let block = d + 1;
    let h = cfg.horizon;
    let xi = cfg.xi();
    let x0: Vec<f64> = start.q.iter().map(|v| v.re()).collect();
    let v0 = start.joint.sample(&row[..block])?;
    let g0: Vec<f64> = v0[1..].iter().map(|v| v.re()).collect();
    let mut traj = Trajectory {
        points: vec![x0.clone()],
        values: vec![v0[0].re()],
        grads: vec![g0.clone()],
        jacobians: Vec::new(),
        value_sens: Vec::new(),
        pinned: vec![vec![false; d]],
        flag: None,
        gp_seq: Vec::with_capacity(h),
    };
    if with_jacobians {
        traj.jacobians.push(DMatrix::identity(d, d));
        traj.value_sens.push(if T::TRACKS { v0[0].tangent(d) } else { g0 });
    }
    if h == 0 {
        return Ok(traj);
    }
    let n_obs = gp.len();
    let mut g = start.root.condition_on_joint(&start.q, &start.joint, &v0)?;
    traj.gp_seq.push(gp.condition_fantasy(&x0, v0[0].re())?);

    for r in 1..=h {
        let f = &traj.gp_seq[r - 1];
        let f_best = f.f_best();
        let policy = cfg.base_policy;
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed(inner_seed, r));
        let res = inner_maximize(
            |x, order| {
                let e = policy.evaluate(f, x, f_best, order)?;
                Ok(Evaluation { value: e.value, grad: e.grad, hess: e.hess })
            },
            &cfg.bounds,
            &cfg.inner,
            &mut rng,
        )?;
        let mut flag = traj.flag;
        if !res.stationary && flag.is_none() {
            flag = Some(TrajectoryFlag::NonStationary { step: r });
        }
        let xr = res.x;
        let mut jac = DMatrix::zeros(d, d);
        if with_jacobians && flag.is_none() {
            match step_jacobian(f, &xr, &res.pinned, f_best, xi, n_obs, &traj, r)? {
                Ok(j) => jac = j,
                Err(fl) => flag = Some(fl),
            }
        }
        traj.flag = flag;
        let q: Vec<T> = (0..d)
            .map(|k| {
                let t: Vec<f64> = jac.row(k).iter().copied().collect();
                T::seeded(xr[k], &t)
            })
            .collect();
        let jp = g.joint_posterior(&q)?;
        let v = jp.sample(&row[r * block..(r + 1) * block])?;
        let gr: Vec<f64> = v[1..].iter().map(|v| v.re()).collect();
        if with_jacobians {
            let sens = if T::TRACKS {
                v[0].tangent(d)
            } else {
                (0..d).map(|c| (0..d).map(|k| gr[k] * jac[(k, c)]).sum()).collect()
            };
            traj.value_sens.push(sens);
            traj.jacobians.push(jac);
        }
        traj.pinned.push(res.pinned);
        traj.values.push(v[0].re());
        traj.grads.push(gr);
        if r < h {
            let next_f = traj.gp_seq[r - 1].condition_fantasy(&xr, v[0].re())?;
            traj.gp_seq.push(next_f);
            g = g.condition_on_joint(&q, &jp, &v)?;
        }
        traj.points.push(xr);
    }
    Ok(traj)
}

fn check_start(gp: &GpState, x0: &[f64], cfg: &RolloutConfig) -> Result<()> {
    cfg.validate()?;
    check_dim(cfg.dim(), gp.dim())?;
    check_dim(cfg.dim(), x0.len())?;
    if !cfg.bounds.contains(x0) {
        return Err(Error::InvalidArgument(format!("start point {x0:?} lies outside the box")));
    }
    Ok(())
}

/// Samples one trajectory from `x0` using the Gaussian `row`, which holds
/// the start draw followed by one `(1 + d)` block per step.
pub fn sample_trajectory(
    gp: &Arc<GpState>,
    x0: &[f64],
    cfg: &RolloutConfig,
    row: &[f64],
    inner_seed: u64,
    with_jacobians: bool,
) -> Result<Trajectory> {
    check_start(gp, x0, cfg)?;
    check_dim(cfg.stream_width(), row.len())?;
    if with_jacobians && cfg.estimator == GradientEstimator::Pathwise {
        with_dual!(x0.len(), T => {
            let start = Start::<T>::new(gp, x0)?;
            simulate(gp, &start, cfg, row, inner_seed, true)
        })
    } else {
        let start = Start::<f64>::new(gp, x0)?;
        simulate(gp, &start, cfg, row, inner_seed, with_jacobians)
    }
}

/// Best step and improvement: `b = argmin_j f̂_j` (smallest `j` on ties) and
/// `(f_best − f̂_b)⁺`.
pub fn min_improvement(values: &[f64], f_best: f64) -> (usize, f64) {
    let b = (0..values.len()).fold(0, |b, j| if values[j] < values[b] { j } else { b });
    (b, (f_best - values[b]).max(0.0))
}

pub fn trajectory_min(t: &Trajectory, f_best: f64) -> (usize, f64) {
    min_improvement(&t.values, f_best)
}

/// Chained start-point Jacobians `∂x^j/∂x` of a trajectory sampled with
/// derivatives.
pub fn trajectory_jacobian(t: &Trajectory) -> Result<&[DMatrix<f64>]> {
    if !t.has_jacobians() {
        return Err(Error::InvalidArgument("trajectory was sampled without derivatives".into()));
    }
    Ok(&t.jacobians)
}

/// Gradient of the trajectory's improvement `(f_best − min_j f̂_j)⁺` with
/// respect to the start point; `None` for flagged trajectories. The
/// subgradient 0 is used at the kink of the positive part.
pub fn trajectory_grad(t: &Trajectory, f_best: f64) -> Result<Option<Vec<f64>>> {
    trajectory_jacobian(t)?;
    if t.flag.is_some() {
        return Ok(None);
    }
    let (b, imp) = trajectory_min(t, f_best);
    let d = t.points[0].len();
    if imp <= 0.0 {
        return Ok(Some(vec![0.0; d]));
    }
    Ok(Some(t.value_sens[b].iter().map(|v| -v).collect()))
}

/// Adjusts `improvements` with the control variate
/// `w_i = max(f_best − f̂_0^i, 0) − EI(x)`, given `one_step_i =
/// max(f_best − f̂_0^i, 0)`. Returns the adjusted samples and the fitted
/// `β̂ = −Cov(α̂, w)/Var(w)`; below [`CV_MIN_VARIANCE`] the samples pass
/// through with `β̂ = 0`.
pub fn apply_control_variate(improvements: &[f64], one_step: &[f64], ei_value: f64) -> Result<(Vec<f64>, f64)> {
    check_dim(improvements.len(), one_step.len())?;
    let n = improvements.len();
    let w: Vec<f64> = one_step.iter().map(|v| v - ei_value).collect();
    if n < 2 {
        return Ok((improvements.to_vec(), 0.0));
    }
    let ma = mean(improvements);
    let mw = mean(&w);
    let nf = (n - 1) as f64;
    let var = w.iter().map(|v| (v - mw).powi(2)).sum::<f64>() / nf;
    if var <= CV_MIN_VARIANCE {
        return Ok((improvements.to_vec(), 0.0));
    }
    let cov = improvements.iter().zip(&w).map(|(a, b)| (a - ma) * (b - mw)).sum::<f64>() / nf;
    let beta = -cov / var;
    Ok((improvements.iter().zip(&w).map(|(a, b)| a + beta * b).collect(), beta))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard error of the mean; 0 for fewer than two samples.
fn std_error(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
}

/// Per-trajectory contribution to the estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub improvement: f64,
    /// `max(f_best − f̂_0, 0)`, the one-step improvement of the start draw.
    pub one_step: f64,
    pub grad: Option<Vec<f64>>,
    pub flag: Option<TrajectoryFlag>,
}

fn run_samples<T: Tangent>(
    gp: &Arc<GpState>,
    x: &[f64],
    cfg: &RolloutConfig,
    stream: &CrnStream,
    with_grad: bool,
) -> Result<Vec<SampleOutcome>> {
    let start = Start::<T>::new(gp, x)?;
    let f_star = gp.f_best();
    (0..stream.len())
        .into_par_iter()
        .map(|i| {
            let t = simulate(gp, &start, cfg, stream.gaussian().row(i), stream.inner_seed(i), with_grad)?;
            let (_, improvement) = trajectory_min(&t, f_star);
            let grad = if with_grad { trajectory_grad(&t, f_star)? } else { None };
            Ok(SampleOutcome { improvement, one_step: (f_star - t.values[0]).max(0.0), grad, flag: t.flag })
        })
        .collect()
}

/// All trajectory outcomes of one estimator evaluation, in stream order.
pub fn rollout_samples(
    gp: &Arc<GpState>,
    x: &[f64],
    cfg: &RolloutConfig,
    stream: &CrnStream,
    with_grad: bool,
) -> Result<Vec<SampleOutcome>> {
    check_start(gp, x, cfg)?;
    check_dim(cfg.stream_width(), stream.gaussian().width())?;
    if with_grad && cfg.estimator == GradientEstimator::Pathwise {
        with_dual!(x.len(), T => run_samples::<T>(gp, x, cfg, stream, true))
    } else {
        run_samples::<f64>(gp, x, cfg, stream, with_grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutEstimate {
    /// `α̂_h(x)`, control-variate adjusted when enabled.
    pub value: f64,
    pub value_se: f64,
    /// Mean improvement before the control variate.
    pub plain_value: f64,
    /// Empty for value-only evaluations.
    pub grad: Vec<f64>,
    pub grad_se: Vec<f64>,
    pub beta_cv: f64,
    /// Trajectories contributing to the gradient.
    pub n_used: usize,
    pub n_samples: usize,
    pub n_flagged: usize,
    /// Standard errors need at least two samples; with one they read 0.
    pub se_defined: bool,
}

/// Value (and gradient when `with_grad`) of the rollout acquisition at `x`.
pub fn rollout_estimate(
    gp: &Arc<GpState>,
    x: &[f64],
    cfg: &RolloutConfig,
    stream: &CrnStream,
    with_grad: bool,
) -> Result<RolloutEstimate> {
    let outcomes = rollout_samples(gp, x, cfg, stream, with_grad)?;
    let n = outcomes.len();
    let d = x.len();
    let imps: Vec<f64> = outcomes.iter().map(|o| o.improvement).collect();
    let plain_value = mean(&imps);
    let (values, beta_cv) = if cfg.variance_reduction.control_variate {
        let one: Vec<f64> = outcomes.iter().map(|o| o.one_step).collect();
        let ei0 = ei(&gp.posterior(x, 0)?, gp.f_best(), 0.0);
        apply_control_variate(&imps, &one, ei0)?
    } else {
        (imps, 0.0)
    };
    let n_flagged = outcomes.iter().filter(|o| o.flag.is_some()).count();
    let mut est = RolloutEstimate {
        value: mean(&values),
        value_se: std_error(&values),
        plain_value,
        grad: Vec::new(),
        grad_se: Vec::new(),
        beta_cv,
        n_used: n - n_flagged,
        n_samples: n,
        n_flagged,
        se_defined: n > 1,
    };
    if with_grad {
        if n_flagged as f64 > cfg.max_flagged_fraction * n as f64 {
            return Err(Error::EstimatorDegraded { flagged: n_flagged, total: n });
        }
        let grads: Vec<&Vec<f64>> = outcomes.iter().filter_map(|o| o.grad.as_ref()).collect();
        est.n_used = grads.len();
        for k in 0..d {
            let comp: Vec<f64> = grads.iter().map(|g| g[k]).collect();
            est.grad.push(if comp.is_empty() { 0.0 } else { mean(&comp) });
            est.grad_se.push(std_error(&comp));
        }
    }
    Ok(est)
}

/// Value and gradient of the rollout acquisition at `x`.
pub fn rollout_value_and_grad(
    gp: &Arc<GpState>,
    x: &[f64],
    cfg: &RolloutConfig,
    stream: &CrnStream,
) -> Result<RolloutEstimate> {
    rollout_estimate(gp, x, cfg, stream, true)
}
