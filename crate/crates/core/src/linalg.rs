//! Dense lower-triangular factors stored row-packed so that appending a row
//! (a Schur-complement update) never moves existing entries.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of jitter escalations tried after a plain factorization fails.
pub const MAX_JITTER_STEPS: usize = 5;

/// Row-packed lower-triangular matrix: row `i` holds `i + 1` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedLower<T: Scalar = f64> {
    n: usize,
    data: Vec<T>,
}

#[inline]
fn row_offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl<T: Scalar> Default for PackedLower<T> {
    fn default() -> Self {
        Self::with_capacity(0)
    }
}

impl<T: Scalar> PackedLower<T> {
    /// Empty factor with room for `rows` rows before reallocating.
    pub fn with_capacity(rows: usize) -> Self {
        Self { n: 0, data: Vec::with_capacity(row_offset(rows)) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Capacity in rows.
    pub fn capacity_rows(&self) -> usize {
        // largest r with r(r+1)/2 <= capacity
        let cap = self.data.capacity() as f64;
        (((8.0 * cap + 1.0).sqrt() - 1.0) / 2.0).floor() as usize
    }

    /// Ensures room for `rows` rows in total, growing by doubling.
    pub fn reserve_rows(&mut self, rows: usize) {
        let need = row_offset(rows);
        if need > self.data.capacity() {
            let target = need.max(2 * self.data.capacity());
            self.data.reserve_exact(target - self.data.len());
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        debug_assert!(j <= i && i < self.n);
        self.data[row_offset(i) + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        let o = row_offset(i);
        &self.data[o..o + i + 1]
    }

    /// Appends a row: `off_diag` has length `len()`, followed by `diag`.
    pub fn push_row(&mut self, off_diag: &[T], diag: T) {
        debug_assert_eq!(off_diag.len(), self.n);
        self.reserve_rows(self.n + 1);
        self.data.extend_from_slice(off_diag);
        self.data.push(diag);
        self.n += 1;
    }

    /// Solves `L x = b` in place.
    pub fn forward_solve_in_place(&self, b: &mut [T]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let mut s = b[i];
            for j in 0..i {
                s -= row[j] * b[j];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn backward_solve_in_place(&self, b: &mut [T]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let xi = b[i] / self.get(i, i);
            b[i] = xi;
            let row = self.row(i);
            for j in 0..i {
                b[j] -= row[j] * xi;
            }
        }
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        self.forward_solve_in_place(b);
        self.backward_solve_in_place(b);
    }

    /// Dense row-major reconstruction of `L Lᵀ`.
    pub fn reconstruct(&self) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let (ri, rj) = (self.row(i), self.row(j));
                let mut s = T::zero();
                for k in 0..=j {
                    s += ri[k] * rj[k];
                }
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        out
    }

    /// Sum of log-diagonal entries (half the log-determinant of `L Lᵀ`).
    pub fn half_log_det(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re().ln()).sum()
    }
}

/// Cholesky factorization of a dense row-major symmetric matrix.
///
/// Returns `None` if a pivot is not strictly positive.
pub fn cholesky<T: Scalar>(a: &[T], n: usize) -> Option<PackedLower<T>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = PackedLower::with_capacity(n);
    let mut row = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        for j in 0..i {
            let rj = l.row(j);
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= row[k] * rj[k];
            }
            row.push(s / rj[j]);
        }
        let mut d = a[i * n + i];
        for v in row.iter() {
            d -= *v * *v;
        }
        if !(d.re() > 0.0) || !d.re().is_finite() {
            return None;
        }
        l.push_row(&row, d.sqrt());
    }
    Some(l)
}

/// Cholesky with the escalating-jitter policy: no jitter first, then
/// `base_jitter`, multiplied by 10 on each failure, at most
/// [`MAX_JITTER_STEPS`] times. Returns the factor and the jitter used.
pub fn cholesky_jittered<T: Scalar>(
    a: &[T],
    n: usize,
    base_jitter: f64,
) -> Result<(PackedLower<T>, f64)> {
    if let Some(l) = cholesky(a, n) {
        return Ok((l, 0.0));
    }
    let mut jitter = base_jitter;
    let mut work = a.to_vec();
    for _ in 0..MAX_JITTER_STEPS {
        work.copy_from_slice(a);
        for i in 0..n {
            work[i * n + i] += T::from_f64(jitter);
        }
        if let Some(l) = cholesky(&work, n) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter: jitter / 10.0 })
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        s += *x * *y;
    }
    s
}

#[inline]
pub fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
