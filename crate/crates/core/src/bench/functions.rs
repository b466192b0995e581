//! Synthetic test functions with their boxes and known minima.

use std::f64::consts::PI;

use crate::domain::Bounds;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct TestFunction {
    pub(crate) name: &'static str,
    pub(crate) bounds: Bounds,
    pub(crate) f_opt: f64,
    pub(crate) minimizers: Vec<Vec<f64>>,
    pub(crate) eval: fn(&[f64]) -> f64,
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Known global minimum value.
    pub fn f_opt(&self) -> f64 {
        self.f_opt
    }

    /// Documented global minimizers.
    pub fn minimizers(&self) -> &[Vec<f64>] {
        &self.minimizers
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}

/// Schwefel per-coordinate constant and minimizer.
pub const SCHWEFEL_CONSTANT: f64 = 418.9828872724337;
pub const SCHWEFEL_MINIMIZER: f64 = 420.968_746_359_982_03;

fn gramacy_lee(x: &[f64]) -> f64 {
    let x = x[0];
    (10.0 * PI * x).sin() / (2.0 * x) + (x - 1.0).powi(4)
}

fn rosenbrock(x: &[f64]) -> f64 {
    100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)
}

fn branin(x: &[f64]) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x[1] - b * x[0] * x[0] + c * x[0] - 6.0).powi(2) + 10.0 * (1.0 - t) * x[0].cos() + 10.0
}

fn goldstein_price(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    let p = 1.0 + (a + b + 1.0).powi(2) * (19.0 - 14.0 * a + 3.0 * a * a - 14.0 * b + 6.0 * a * b + 3.0 * b * b);
    let q = 30.0
        + (2.0 * a - 3.0 * b).powi(2) * (18.0 - 32.0 * a + 12.0 * a * a + 48.0 * b - 36.0 * a * b + 27.0 * b * b);
    p * q
}

fn six_hump_camel(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (4.0 - 2.1 * a * a + a.powi(4) / 3.0) * a * a + a * b + (-4.0 + 4.0 * b * b) * b * b
}

fn schwefel(x: &[f64]) -> f64 {
    SCHWEFEL_CONSTANT * x.len() as f64 - x.iter().map(|v| v * v.abs().sqrt().sin()).sum::<f64>()
}

fn make(name: &'static str, lo: Vec<f64>, hi: Vec<f64>, f_opt: f64, minimizers: Vec<Vec<f64>>, eval: fn(&[f64]) -> f64) -> TestFunction {
    let bounds = Bounds::new(lo, hi).expect("static boxes are valid");
    TestFunction { name, bounds, f_opt, minimizers, eval }
}

/// Every available function, in a fixed order.
pub fn all() -> Vec<TestFunction> {
    let camel = vec![
        vec![0.089_842_013_100_318_06, -0.712_656_403_020_973_4],
        vec![-0.089_842_013_100_318_06, 0.712_656_403_020_973_4],
    ];
    vec![
        make("gramacy-lee", vec![0.5], vec![2.5], -0.869_011_134_989_499_8, vec![vec![0.548_563_444_527_605_2]], gramacy_lee),
        make("rosenbrock", vec![-2.048; 2], vec![2.048; 2], 0.0, vec![vec![1.0, 1.0]], rosenbrock),
        make(
            "branin",
            vec![-5.0, 0.0],
            vec![10.0, 15.0],
            0.397_887_357_729_738_3,
            vec![vec![-PI, 12.275], vec![PI, 2.275], vec![3.0 * PI, 2.475]],
            branin,
        ),
        make("goldstein-price", vec![-2.0; 2], vec![2.0; 2], 3.0, vec![vec![0.0, -1.0]], goldstein_price),
        make("six-hump-camel", vec![-3.0, -2.0], vec![3.0, 2.0], -1.031_628_453_489_877_4, camel, six_hump_camel),
        make("schwefel4d", vec![-500.0; 4], vec![500.0; 4], 0.0, vec![vec![SCHWEFEL_MINIMIZER; 4]], schwefel),
    ]
}

pub fn by_name(name: &str) -> Result<TestFunction> {
    let key = name.to_ascii_lowercase().replace('_', "-");
    let key = match key.as_str() {
        "gramacylee" | "gl" => "gramacy-lee",
        "branin-hoo" => "branin",
        "goldsteinprice" | "gp" => "goldstein-price",
        "sixhumpcamel" | "camel" => "six-hump-camel",
        "schwefel" | "schwefel-4d" => "schwefel4d",
        k => k,
    }
    .to_string();
    all()
        .into_iter()
        .find(|f| f.name == key)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown test function {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizers_attain_the_minimum() {
        for f in all() {
            for x in f.minimizers() {
                assert!(f.bounds().contains(x), "{}", f.name());
                let v = f.eval(x);
                assert!((v - f.f_opt()).abs() <= 1e-9, "{}: {v} vs {}", f.name(), f.f_opt());
            }
        }
    }

    #[test]
    fn minimum_is_not_beaten_on_a_grid() {
        for f in all().into_iter().filter(|f| f.dim() <= 2) {
            let b = f.bounds();
            let n = 400;
            for i in 0..=n {
                for j in 0..=if f.dim() == 2 { n } else { 0 } {
                    let u: Vec<f64> = [i, j][..f.dim()].iter().map(|k| *k as f64 / n as f64).collect();
                    assert!(f.eval(&b.from_unit(&u)) >= f.f_opt() - 1e-9, "{}", f.name());
                }
            }
        }
    }

    #[test]
    fn names_resolve() {
        assert_eq!(by_name("Gramacy_Lee").unwrap().name(), "gramacy-lee");
        assert_eq!(by_name("schwefel").unwrap().dim(), 4);
        assert!(by_name("ackley").is_err());
    }
}
