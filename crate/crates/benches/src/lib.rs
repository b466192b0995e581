//! Shared fixtures for the criterion benchmarks.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbo_core::bench::function_by_name;
use rbo_core::{Dataset, GpState, KernelParams};

/// `n` uniform points in the unit square with a smooth response.
pub fn square_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let y = pts.iter().map(|p| (4.0 * p[0]).sin() * (3.0 * p[1]).cos()).collect();
    (pts, y)
}

/// GP on five Gramacy–Lee observations mapped to the unit interval.
pub fn gramacy_lee_gp() -> Arc<GpState> {
    let f = function_by_name("gramacy-lee").expect("built-in function");
    let xs = [0.08, 0.31, 0.47, 0.72, 0.93];
    let pts: Vec<Vec<f64>> = xs.iter().map(|u| vec![*u]).collect();
    let y: Vec<f64> = pts.iter().map(|u| f.eval(&f.bounds().from_unit(u))).collect();
    let data = Dataset::new(1, &pts, &y).expect("consistent data");
    let params = KernelParams::isotropic(1.0, 0.15, 1).expect("positive constants");
    Arc::new(GpState::fit(&data, params, 1e-6).expect("well-posed fit"))
}
