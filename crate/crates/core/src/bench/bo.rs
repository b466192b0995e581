//! The Bayesian-optimization loop used by the benchmarks.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::functions::TestFunction;
use crate::acquisition::Acquisition;
use crate::domain::Bounds;
use crate::error::{Error, Result};
use crate::gp::{fit_hypers, Dataset, GpState, HyperFitOptions};
use crate::kernel::KernelParams;
use crate::optimizer::{inner_maximize, propose_next, AdamConfig, Evaluation, InnerOptConfig};
use crate::rollout::{GradientEstimator, RolloutConfig, VarianceReduction};
use crate::sampler::mix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Pi,
    Ei,
    Ucb,
    Rollout { horizon: usize },
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Pi => f.write_str("pi"),
            Policy::Ei => f.write_str("ei"),
            Policy::Ucb => f.write_str("ucb"),
            Policy::Rollout { horizon } => write!(f, "rollout-h{horizon}"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// Accepts `pi`, `ei`, `ucb` and `rollout-h<h>` (also `a<h>`).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let horizon = |rest: &str| {
            rest.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad horizon in policy {s:?}")))
        };
        match t.as_str() {
            "pi" | "poi" => Ok(Policy::Pi),
            "ei" => Ok(Policy::Ei),
            "ucb" => Ok(Policy::Ucb),
            _ => {
                if let Some(rest) = t.strip_prefix("rollout-h") {
                    Ok(Policy::Rollout { horizon: horizon(rest)? })
                } else if let Some(rest) = t.strip_prefix('a').filter(|r| !r.is_empty()) {
                    Ok(Policy::Rollout { horizon: horizon(rest)? })
                } else {
                    Err(Error::InvalidArgument(format!("unknown policy {s:?}")))
                }
            }
        }
    }
}

/// Settings of one BO run other than the function, policy and seed.
#[derive(Clone, Debug, PartialEq)]
pub struct BoConfig {
    pub budget: usize,
    pub n_init: usize,
    /// Observation noise variance on the standardized scale.
    pub noise: f64,
    pub ucb_beta: f64,
    pub n_samples: usize,
    pub variance_reduction: VarianceReduction,
    pub estimator: GradientEstimator,
    pub inner: InnerOptConfig,
    pub adam: AdamConfig,
    pub hyper_restarts: usize,
    /// Record per-iteration wall-clock time (breaks byte-identical output).
    pub timing: bool,
    /// Fixed hyperparameters on the unit cube instead of refitting.
    pub fixed_hypers: Option<KernelParams>,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            budget: 15,
            n_init: 1,
            noise: 1e-6,
            ucb_beta: 4.0,
            n_samples: 64,
            variance_reduction: VarianceReduction::default(),
            estimator: GradientEstimator::default(),
            inner: InnerOptConfig::default(),
            adam: AdamConfig::default(),
            hyper_restarts: 2,
            timing: false,
            fixed_hypers: None,
        }
    }
}

/// Default unit-cube hyperparameters while fewer than two points exist.
pub fn default_hypers(dim: usize) -> KernelParams {
    KernelParams::isotropic(1.0, 0.25, dim).expect("positive constants")
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRun {
    pub function: String,
    pub policy: Policy,
    pub seed: u64,
    pub budget: usize,
    pub n_init: usize,
    /// Incumbent after the initial design and after each iteration.
    pub history: Vec<f64>,
    pub gap: f64,
    /// Running GAP per history entry.
    pub gap_history: Vec<f64>,
    /// Milliseconds spent proposing at each iteration, when timed.
    pub wall_ms: Vec<Option<f64>>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Iterations where the rollout estimator degraded and EI was used.
    pub fallbacks: usize,
}

/// `G = (f₁ − f_last)/(f₁ − f_opt)` over an incumbent history, clamped to
/// `[0, 1]`. A history that starts at the optimum has `G = 1`.
pub fn gap(history: &[f64], f_opt: f64) -> Result<f64> {
    let (Some(first), Some(last)) = (history.first(), history.last()) else {
        return Err(Error::InvalidArgument("gap needs a nonempty history".into()));
    };
    let denom = first - f_opt;
    if denom <= 0.0 {
        return Ok(1.0);
    }
    Ok(((first - last) / denom).clamp(0.0, 1.0))
}

fn standardize(y: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    y.iter().map(|v| (v - mean) / sd).collect()
}

fn analytic_proposal(gp: &GpState, acq: Acquisition, inner: &InnerOptConfig, seed: u64) -> Result<Vec<f64>> {
    let f_best = gp.f_best();
    let bounds = Bounds::unit(gp.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = inner_maximize(
        |x, order| {
            let e = acq.evaluate(gp, x, f_best, order)?;
            Ok(Evaluation { value: e.value, grad: e.grad, hess: e.hess })
        },
        &bounds,
        inner,
        &mut rng,
    )?;
    Ok(r.x)
}

/// One BO run: `n_init` uniform points, then `budget` proposals by `policy`.
/// The GP lives on the unit cube with standardized targets.
pub fn run_bo(function: &TestFunction, policy: Policy, seed: u64, cfg: &BoConfig) -> Result<BenchRun> {
    if cfg.budget == 0 || cfg.n_init == 0 {
        return Err(Error::InvalidArgument("budget and n_init must be at least 1".into()));
    }
    let d = function.dim();
    let unit = Bounds::unit(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(cfg.n_init + cfg.budget);
    let mut values = Vec::with_capacity(cfg.n_init + cfg.budget);
    let evaluate = |u: Vec<f64>, points: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| -> Result<f64> {
        let x = function.bounds().from_unit(&u);
        let v = function.eval(&x);
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective { x, value: v });
        }
        points.push(u);
        values.push(v);
        Ok(v)
    };
    for _ in 0..cfg.n_init {
        let u = unit.sample_uniform(&mut rng);
        evaluate(u, &mut points, &mut values)?;
    }
    let incumbent = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let mut history = vec![incumbent(&values)];
    let mut wall_ms = Vec::with_capacity(cfg.budget);
    let mut params: Option<KernelParams> = None;
    let mut fallbacks = 0;

    for t in 0..cfg.budget {
        let iter_seed = mix64(seed ^ mix64(t as u64 + 1));
        let started = Instant::now();
        let data = Dataset::new(d, &points, &standardize(&values))?;
        let p = match (&cfg.fixed_hypers, data.len()) {
            (Some(p), _) => p.clone(),
            (None, m) if m < 2 => default_hypers(d),
            (None, _) => {
                let opts = HyperFitOptions {
                    restarts: cfg.hyper_restarts,
                    seed: iter_seed,
                    warm_start: params.clone(),
                    ..Default::default()
                };
                fit_hypers(&data, cfg.noise, &opts)?
            }
        };
        params = Some(p.clone());
        let gp = GpState::fit(&data, p, cfg.noise)?;
        let u = match policy {
            Policy::Pi => analytic_proposal(&gp, Acquisition::Pi { xi: 0.0 }, &cfg.inner, iter_seed)?,
            Policy::Ei => analytic_proposal(&gp, Acquisition::Ei { xi: 0.0 }, &cfg.inner, iter_seed)?,
            Policy::Ucb => analytic_proposal(&gp, Acquisition::Ucb { beta: cfg.ucb_beta }, &cfg.inner, iter_seed)?,
            Policy::Rollout { horizon } => {
                let mut rc = RolloutConfig::new(unit.clone(), horizon, cfg.n_samples);
                rc.variance_reduction = cfg.variance_reduction;
                rc.estimator = cfg.estimator;
                rc.inner = cfg.inner.clone();
                match propose_next(&Arc::new(gp.clone()), &rc, &cfg.adam, iter_seed) {
                    Ok(p) => p.x,
                    Err(Error::EstimatorDegraded { .. }) => {
                        fallbacks += 1;
                        analytic_proposal(&gp, Acquisition::Ei { xi: 0.0 }, &cfg.inner, iter_seed)?
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        wall_ms.push(cfg.timing.then(|| started.elapsed().as_secs_f64() * 1e3));
        evaluate(u, &mut points, &mut values)?;
        history.push(incumbent(&values));
    }
    let gap_history = (1..=history.len()).map(|k| gap(&history[..k], function.f_opt())).collect::<Result<Vec<_>>>()?;
    Ok(BenchRun {
        function: function.name().to_string(),
        policy,
        seed,
        budget: cfg.budget,
        n_init: cfg.n_init,
        gap: *gap_history.last().expect("history is nonempty"),
        gap_history,
        history,
        wall_ms,
        points,
        values,
        fallbacks,
    })
}
