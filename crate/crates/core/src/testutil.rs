//! Finite-difference oracles shared by unit tests.

/// Five-point central difference of a vector-valued `f` along coordinate `k`.
pub(crate) fn central_diff<F>(mut f: F, x: &[f64], k: usize, h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut at = |t: f64| {
        let mut p = x.to_vec();
        p[k] += t;
        f(&p)
    };
    let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
    (0..p1.len()).map(|i| (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h)).collect()
}

/// `|a − b| ≤ rel · max(|a|, |b|, floor)`.
pub(crate) fn close(a: f64, b: f64, rel: f64, floor: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(floor)
}
