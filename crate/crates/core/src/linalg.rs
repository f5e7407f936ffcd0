//! Small dense and banded linear algebra used by the solvers.
//!
//! Everything here is generic over [`Scalar`]; matrices are row-major `Vec`s.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite band matrix.
///
/// Only the lower band is stored: row `i` keeps columns `i - bandwidth ..= i`.
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    n: usize,
    bw: usize,
    l: Vec<T>,
}

impl<T: Scalar> BandedCholesky<T> {
    /// Factors the matrix whose lower-band entries are produced by `entry(i, j)`, `j <= i`.
    pub fn factor<F>(n: usize, bandwidth: usize, mut entry: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> T,
    {
        let bw = bandwidth.min(n.saturating_sub(1));
        let w = bw + 1;
        let mut l = vec![T::zero(); n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                l[i * w + (j + bw - i)] = entry(i, j);
            }
        }
        Self::from_lower_band(n, bw, l)
    }

    /// Factors a matrix given in lower-band storage: entry `(i, j)`, `i - bw <= j <= i`,
    /// lives at `band[i * (bw + 1) + j + bw - i]`. Requires `bw < n` (or `n == 0`).
    pub fn from_lower_band(n: usize, bw: usize, mut l: Vec<T>) -> Result<Self> {
        let w = bw + 1;
        if l.len() != n * w || (n > 0 && bw >= n) {
            return Err(Error::DimensionMismatch { expected: n * w, found: l.len() });
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            let diag = l[i * w + bw];
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut s = l[i * w + (j + bw - i)];
                for k in lo..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if i == j {
                    // pivots lost to rounding count as singular
                    if !(s > T::c(64.0) * T::epsilon() * diag.abs()) || !s.is_finite() {
                        return Err(Error::SingularSystem);
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + bw + 1).min(n) {
                s -= self.l[k * w + (i + bw - k)] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }
}

/// Solves a dense SPD system `A x = b` (`A` is `n × n`, row-major).
pub fn cholesky_solve<T: Scalar>(a: &[T], n: usize, b: &[T]) -> Result<Vec<T>> {
    let chol = BandedCholesky::factor(n, n.saturating_sub(1), |i, j| a[i * n + j])?;
    let mut x = b.to_vec();
    chol.solve_in_place(&mut x);
    Ok(x)
}

/// Eigenvalues of a dense symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues<T: Scalar>(a: &[T], n: usize) -> Vec<T> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[0]];
    }
    if n == 2 {
        let (p, q, r) = (a[0], a[1], a[3]);
        let (lo, hi) = eig2(p, q, r);
        return vec![lo, hi];
    }
    let mut m = a.to_vec();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let v = m[i * n + j] * m[i * n + j];
                total += v;
                if i != j {
                    off += v;
                }
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (T::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// Closed-form eigenvalues `(min, max)` of the symmetric 2×2 matrix `[[p, q], [q, r]]`.
pub fn eig2<T: Scalar>(p: T, q: T, r: T) -> (T, T) {
    let half = T::c(0.5);
    let mean = half * (p + r);
    let rad = (half * (p - r)).hypot(q);
    let hi = mean + rad;
    // lo = det / hi avoids cancellation when the matrix is nearly singular
    let det = p * r - q * q;
    let lo = if hi > T::zero() { det / hi } else { mean - rad };
    (lo, hi)
}
