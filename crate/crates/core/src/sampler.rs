//! Uniform and Gaussian sample streams for the rollout estimator.
//!
//! Sobol points use the Joe–Kuo `new-joe-kuo-6` direction numbers and a
//! hash-based nested uniform (Owen) scramble keyed by the stream seed.
//! Gaussians come from Box–Muller on consecutive column pairs.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const JOE_KUO: &str = include_str!("../data/new-joe-kuo-6.128.txt");

/// Bits of precision per Sobol coordinate.
const BITS: usize = 32;

/// Uniforms are clamped to `[U_CLAMP, 1 − U_CLAMP]` before Box–Muller.
pub const U_CLAMP: f64 = 1e-12;

fn direction_table() -> &'static Vec<[u32; BITS]> {
    static TABLE: OnceLock<Vec<[u32; BITS]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut dims = Vec::new();
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1u32 << (BITS - 1 - k);
        }
        dims.push(first);
        for line in JOE_KUO.lines().skip(1) {
            let fields: Vec<u32> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
            if fields.len() < 3 {
                continue;
            }
            let (s, a) = (fields[1] as usize, fields[2]);
            let m = &fields[3..3 + s];
            let mut v = [0u32; BITS];
            for k in 0..BITS {
                v[k] = if k < s {
                    m[k] << (BITS - 1 - k)
                } else {
                    let mut x = v[k - s] ^ (v[k - s] >> s);
                    for t in 1..s {
                        if (a >> (s - 1 - t)) & 1 == 1 {
                            x ^= v[k - t];
                        }
                    }
                    x
                };
            }
            dims.push(v);
        }
        dims
    })
}

/// Number of dimensions supported by the direction-number table.
pub fn max_sobol_dim() -> usize {
    direction_table().len()
}

/// Unscrambled Sobol coordinate as a 32-bit fixed-point fraction.
fn sobol_bits(index: u32, dim: usize) -> u32 {
    let v = &direction_table()[dim];
    let mut x = 0u32;
    let mut i = index;
    let mut k = 0;
    while i != 0 {
        if i & 1 == 1 {
            x ^= v[k];
        }
        i >>= 1;
        k += 1;
    }
    x
}

/// Unscrambled Sobol coordinate in `[0, 1)`.
pub fn sobol(index: u32, dim: usize) -> Result<f64> {
    if dim >= max_sobol_dim() {
        return Err(Error::UnsupportedDimension { dim: dim + 1, max: max_sobol_dim() });
    }
    Ok(sobol_bits(index, dim) as f64 / 4294967296.0)
}

/// Laine–Karras style permutation acting on bit-reversed values, so that
/// each output bit depends only on higher-order input bits.
#[inline]
fn lk_permute(mut x: u32, seed: u32) -> u32 {
    x ^= x.wrapping_mul(0x3d20adea);
    x = x.wrapping_add(seed);
    x = x.wrapping_mul((seed >> 16) | 1);
    x ^= x.wrapping_mul(0x05526c56);
    x ^= x.wrapping_mul(0x53a22864);
    x
}

#[inline]
fn owen_scramble(x: u32, seed: u32) -> u32 {
    lk_permute(x.reverse_bits(), seed).reverse_bits()
}

/// splitmix64 finalizer, used to derive per-dimension scramble seeds.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleMode {
    Sobol,
    Pseudorandom,
}

/// Specification of an `n × dim` stream; materialization is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QmcStream {
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
    pub mode: SampleMode,
}

impl QmcStream {
    pub fn new(dim: usize, n: usize, seed: u64, mode: SampleMode) -> Result<Self> {
        if dim == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("stream needs dim, n >= 1 (got {dim}, {n})")));
        }
        if mode == SampleMode::Sobol && dim > max_sobol_dim() {
            return Err(Error::UnsupportedDimension { dim, max: max_sobol_dim() });
        }
        Ok(Self { dim, n, seed, mode })
    }

    /// Row-major `n × dim` uniforms in `[0, 1)`.
    pub fn uniform_points(&self) -> Result<Vec<f64>> {
        self.uniforms(self.dim)
    }

    fn uniforms(&self, width: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n * width];
        match self.mode {
            SampleMode::Sobol => {
                if width > max_sobol_dim() {
                    return Err(Error::UnsupportedDimension { dim: width, max: max_sobol_dim() });
                }
                if self.n > u32::MAX as usize {
                    return Err(Error::InvalidArgument("too many Sobol points".into()));
                }
                for j in 0..width {
                    let seed = mix64(self.seed ^ mix64(j as u64 + 1)) as u32;
                    for i in 0..self.n {
                        let bits = owen_scramble(sobol_bits(i as u32, j), seed);
                        out[i * width + j] = bits as f64 / 4294967296.0;
                    }
                }
            }
            SampleMode::Pseudorandom => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                for v in out.iter_mut() {
                    *v = rng.random::<f64>();
                }
            }
        }
        Ok(out)
    }

    /// Standard-normal stream of width `dim`. An odd width draws one extra
    /// uniform column and discards the second coordinate of the last pair.
    pub fn gaussian(&self) -> Result<GaussianStream> {
        let even = self.dim + self.dim % 2;
        let u = self.uniforms(even)?;
        let z = gaussianize(&u, even)?;
        let data = if even == self.dim {
            z
        } else {
            z.chunks(even).flat_map(|row| row[..self.dim].iter().copied()).collect()
        };
        Ok(GaussianStream { n: self.n, width: self.dim, data })
    }
}

/// Box–Muller on column pairs `(2k, 2k+1)` of a row-major uniform matrix.
pub fn gaussianize(u: &[f64], width: usize) -> Result<Vec<f64>> {
    if width % 2 != 0 || u.len() % width.max(1) != 0 {
        return Err(Error::InvalidArgument(format!("gaussianize needs an even width, got {width}")));
    }
    let mut out = vec![0.0; u.len()];
    for (src, dst) in u.chunks_exact(2).zip(out.chunks_exact_mut(2)) {
        let u1 = src[0].clamp(U_CLAMP, 1.0 - U_CLAMP);
        let u2 = src[1].clamp(U_CLAMP, 1.0 - U_CLAMP);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        dst[0] = r * c;
        dst[1] = r * s;
    }
    Ok(out)
}

/// Materialized `n × width` standard-normal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStream {
    n: usize,
    width: usize,
    data: Vec<f64>,
}

impl GaussianStream {
    pub fn from_rows(n: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * width {
            return Err(Error::DimensionMismatch { expected: n * width, got: data.len() });
        }
        Ok(Self { n, width, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    /// Slice of sample `i` owned by rollout step `step`: the value draw
    /// followed by `block − 1` gradient draws.
    pub fn step_slice(&self, i: usize, step: usize, block: usize) -> &[f64] {
        &self.row(i)[step * block..(step + 1) * block]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// L2-star discrepancy (Warnock's formula).
    fn l2_star(points: &[f64], d: usize) -> f64 {
        let n = points.len() / d;
        let rows: Vec<&[f64]> = points.chunks(d).collect();
        let t1 = 3f64.powi(-(d as i32));
        let t2: f64 = rows.iter().map(|r| r.iter().map(|x| (1.0 - x * x) / 2.0).product::<f64>()).sum::<f64>()
            * 2.0
            / n as f64;
        let mut t3 = 0.0;
        for a in &rows {
            for b in &rows {
                t3 += a.iter().zip(b.iter()).map(|(x, y)| 1.0 - x.max(*y)).product::<f64>();
            }
        }
        (t1 - t2 + t3 / (n * n) as f64).max(0.0).sqrt()
    }

    #[test]
    fn unscrambled_first_dimension_is_van_der_corput() {
        let v: Vec<f64> = (0..4).map(|i| sobol(i, 0).unwrap()).collect();
        assert_eq!(v, vec![0.0, 0.5, 0.25, 0.75]);
        let w: Vec<f64> = (0..4).map(|i| sobol(i, 1).unwrap()).collect();
        assert_eq!(w, vec![0.0, 0.5, 0.75, 0.25]);
    }

    #[test]
    fn table_size_and_rejection() {
        assert_eq!(max_sobol_dim(), 129);
        assert!(matches!(
            QmcStream::new(500, 8, 0, SampleMode::Sobol),
            Err(Error::UnsupportedDimension { .. })
        ));
    }

    #[test]
    fn scrambled_points_stay_stratified() {
        // every dyadic interval of length 1/16 holds exactly one of 16 points
        let s = QmcStream::new(5, 16, 42, SampleMode::Sobol).unwrap();
        let u = s.uniform_points().unwrap();
        for j in 0..5 {
            let mut seen = [false; 16];
            for i in 0..16 {
                let cell = (u[i * 5 + j] * 16.0) as usize;
                assert!(!seen[cell]);
                seen[cell] = true;
            }
        }
    }

    #[test]
    fn streams_are_deterministic_and_seed_dependent() {
        for mode in [SampleMode::Sobol, SampleMode::Pseudorandom] {
            let a = QmcStream::new(6, 64, 9, mode).unwrap().gaussian().unwrap();
            let b = QmcStream::new(6, 64, 9, mode).unwrap().gaussian().unwrap();
            let c = QmcStream::new(6, 64, 10, mode).unwrap().gaussian().unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
        }
    }

    #[test]
    fn column_means_are_centered() {
        let u = QmcStream::new(7, 1024, 3, SampleMode::Sobol).unwrap().uniform_points().unwrap();
        for j in 0..7 {
            let m = (0..1024).map(|i| u[i * 7 + j]).sum::<f64>() / 1024.0;
            assert!((m - 0.5).abs() <= 0.02);
        }
    }

    #[test]
    fn box_muller_spot_value() {
        let z = gaussianize(&[(-2.0f64).exp(), 0.0], 2).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
        assert!(z[1].abs() < 1e-10);
        assert!(gaussianize(&[0.5; 3], 3).is_err());
    }

    #[test]
    fn gaussian_columns_have_unit_variance() {
        for width in [4usize, 5] {
            let g = QmcStream::new(width, 1 << 14, 5, SampleMode::Sobol).unwrap().gaussian().unwrap();
            assert_eq!(g.width(), width);
            for j in 0..width {
                let col: Vec<f64> = (0..g.len()).map(|i| g.row(i)[j]).collect();
                let m = col.iter().sum::<f64>() / col.len() as f64;
                let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
                assert!((v - 1.0).abs() <= 0.05, "column {j} variance {v}");
            }
        }
    }

    #[test]
    fn sobol_has_lower_discrepancy_than_pseudorandom() {
        for d in 1..=4 {
            let n = 256;
            let mut sob = 0.0;
            let mut prn = 0.0;
            for seed in 0..5 {
                sob += l2_star(&QmcStream::new(d, n, seed, SampleMode::Sobol).unwrap().uniform_points().unwrap(), d);
                prn += l2_star(
                    &QmcStream::new(d, n, seed, SampleMode::Pseudorandom).unwrap().uniform_points().unwrap(),
                    d,
                );
            }
            assert!(sob < prn, "d={d}: {sob} vs {prn}");
        }
    }

    #[test]
    fn qmc_integration_error_beats_monte_carlo() {
        // E[Π cos(Z_k)] = exp(−d/2)
        for d in [1usize, 2, 4, 8] {
            let exact = (-(d as f64) / 2.0).exp();
            let rmse = |mode| {
                let mut se = 0.0;
                for seed in 0..20 {
                    let g = QmcStream::new(d, 256, seed, mode).unwrap().gaussian().unwrap();
                    let est = (0..256).map(|i| g.row(i).iter().map(|z| z.cos()).product::<f64>()).sum::<f64>()
                        / 256.0;
                    se += (est - exact).powi(2);
                }
                (se / 20.0).sqrt()
            };
            let (a, b) = (rmse(SampleMode::Sobol), rmse(SampleMode::Pseudorandom));
            assert!(a < b, "d={d}: sobol {a} vs pseudorandom {b}");
        }
    }
}
