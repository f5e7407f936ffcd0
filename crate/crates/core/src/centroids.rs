use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::scalar::Scalar;

/// Per-node parameter vectors `x_1, …, x_n ∈ R^p`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Centroids<T> {
    n: usize,
    p: usize,
    data: Vec<T>,
}

impl<T: Scalar> Centroids<T> {
    pub fn zeros(n: usize, p: usize) -> Self {
        Self { n, p, data: vec![T::zero(); n * p] }
    }

    pub fn from_flat(n: usize, p: usize, data: Vec<T>) -> Result<Self> {
        check_dim(n * p, data.len())?;
        Ok(Self { n, p, data })
    }

    /// Builds from one row per node; all rows must share a length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for r in rows {
            check_dim(p, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Self { n, p, data })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.p.max(1)).take(self.n)
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Largest row norm, `max_i ‖x_i‖`.
    pub fn max_row_norm(&self) -> T {
        self.rows()
            .map(crate::scalar::norm2)
            .fold(T::zero(), |a, b| a.max(b))
    }
}
