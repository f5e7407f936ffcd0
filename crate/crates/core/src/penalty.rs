//! The trimmed group penalty `T_K(z) = ‖z_(K+1)‖ + … + ‖z_(m)‖`, the sum of the
//! `m - K` smallest block norms, together with its exact proximal mapping and
//! directional derivative.
//!
//! Ties in the block-norm ranking are broken by the lowest block index, so every
//! operation returns one canonical element of a possibly set-valued answer.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::scalar::{dot, norm2, Scalar};

/// `m` blocks of dimension `p`, stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockVector<T> {
    m: usize,
    p: usize,
    data: Vec<T>,
}

impl<T: Scalar> BlockVector<T> {
    pub fn zeros(m: usize, p: usize) -> Self {
        Self { m, p, data: vec![T::zero(); m * p] }
    }

    pub fn from_flat(m: usize, p: usize, data: Vec<T>) -> Result<Self> {
        check_dim(m * p, data.len())?;
        Ok(Self { m, p, data })
    }

    /// Blocks of dimension one.
    pub fn from_scalars(values: &[T]) -> Self {
        Self { m: values.len(), p: 1, data: values.to_vec() }
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn block(&self, k: usize) -> &[T] {
        &self.data[k * self.p..(k + 1) * self.p]
    }

    #[inline]
    pub fn block_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[k * self.p..(k + 1) * self.p]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn block_norms(&self) -> Vec<T> {
        (0..self.m).map(|k| norm2(self.block(k))).collect()
    }

    /// Euclidean norm of the whole stacked vector.
    pub fn norm(&self) -> T {
        norm2(&self.data)
    }

    /// Indices of nonzero blocks.
    pub fn support(&self) -> Vec<usize> {
        (0..self.m)
            .filter(|&k| self.block(k).iter().any(|&v| v != T::zero()))
            .collect()
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        check_dim(self.m, other.m)?;
        check_dim(self.p, other.p)
    }
}

/// Which blocks a trimmed operation left untouched (`kept`, the `min(K, m)` largest
/// norms) and which it penalized (`trimmed`). Both lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrimSelection {
    pub kept: Vec<usize>,
    pub trimmed: Vec<usize>,
}

/// Ranks block indices by norm descending, ties by index ascending, and splits
/// off the first `k` of them.
pub(crate) fn select_largest<T: Scalar>(norms: &[T], k: usize) -> TrimSelection {
    let m = norms.len();
    let k = k.min(m);
    let desc = |a: &usize, b: &usize| -> Ordering {
        norms[*b]
            .partial_cmp(&norms[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..m).collect();
    if k > 0 && k < m {
        idx.select_nth_unstable_by(k - 1, desc);
    }
    let mut kept = idx[..k].to_vec();
    let mut trimmed = idx[k..].to_vec();
    kept.sort_unstable();
    trimmed.sort_unstable();
    TrimSelection { kept, trimmed }
}

/// `T_K(z)`: the sum of the `m - K` smallest block norms. `K >= m` gives zero.
pub fn trimmed_norm<T: Scalar>(z: &BlockVector<T>, k: usize) -> T {
    let norms = z.block_norms();
    trimmed_sum(&norms, k)
}

pub(crate) fn trimmed_sum<T: Scalar>(norms: &[T], k: usize) -> T {
    if k == 0 {
        return norms.iter().copied().sum();
    }
    if k >= norms.len() {
        return T::zero();
    }
    let sel = select_largest(norms, k);
    sel.trimmed.iter().map(|&i| norms[i]).sum()
}

/// Block soft-threshold `prox_{λ‖·‖}(a)`: zero when `‖a‖ <= λ`, else `(1 - λ/‖a‖) a`.
pub fn prox_group_l2<T: Scalar>(a: &[T], lambda: T) -> Vec<T> {
    let mut out = a.to_vec();
    shrink_in_place(&mut out, lambda);
    out
}

#[inline]
pub(crate) fn shrink_in_place<T: Scalar>(a: &mut [T], lambda: T) {
    let nrm = norm2(a);
    if nrm <= lambda {
        a.iter_mut().for_each(|v| *v = T::zero());
    } else {
        let s = T::one() - lambda / nrm;
        a.iter_mut().for_each(|v| *v *= s);
    }
}

/// Optimal value `min_z { λ‖z‖ + ½‖z - a‖² }` as a function of `t = ‖a‖`:
/// `½t²` for `t <= λ`, `λt - ½λ²` beyond.
pub fn phi_envelope<T: Scalar>(t: T, lambda: T) -> T {
    let half = T::c(0.5);
    if t <= lambda {
        half * t * t
    } else {
        lambda * t - half * lambda * lambda
    }
}

/// Exact proximal mapping of `λ T_K`, a global minimizer of `λ T_K(z) + ½‖z - a‖²`.
///
/// The `K` blocks of largest norm are copied; every other block is soft-thresholded
/// by `λ`. Because the per-block cost `φ(‖a_k‖)` is increasing in `‖a_k‖`, trimming the
/// largest blocks is optimal.
pub fn prox_trimmed<T: Scalar>(
    a: &BlockVector<T>,
    k: usize,
    lambda: T,
) -> Result<(BlockVector<T>, TrimSelection)> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::param(format!("prox threshold must be positive, got {lambda}")));
    }
    let mut out = a.clone();
    let sel = prox_trimmed_in_place(&mut out, k, lambda);
    Ok((out, sel))
}

pub(crate) fn prox_trimmed_in_place<T: Scalar>(a: &mut BlockVector<T>, k: usize, lambda: T) -> TrimSelection {
    let norms = a.block_norms();
    let sel = select_largest(&norms, k);
    for &b in &sel.trimmed {
        let nrm = norms[b];
        let blk = a.block_mut(b);
        if nrm <= lambda {
            blk.iter_mut().for_each(|v| *v = T::zero());
        } else {
            let s = T::one() - lambda / nrm;
            blk.iter_mut().for_each(|v| *v *= s);
        }
    }
    sel
}

/// Per-block soft-threshold with block-specific thresholds (the weighted group
/// lasso prox used by Network Lasso).
pub fn prox_weighted_group_l2<T: Scalar>(a: &BlockVector<T>, lambdas: &[T]) -> Result<BlockVector<T>> {
    check_dim(a.m(), lambdas.len())?;
    let mut out = a.clone();
    for (k, &l) in lambdas.iter().enumerate() {
        shrink_in_place(out.block_mut(k), l);
    }
    Ok(out)
}

/// `δ(z, v)ᵀ v`: the one-sided derivative of `‖z + η v‖` at `η = 0`.
#[inline]
fn block_slope<T: Scalar>(z: &[T], v: &[T]) -> T {
    let nz = norm2(z);
    if nz > T::zero() {
        dot(z, v) / nz
    } else {
        norm2(v)
    }
}

/// One-sided directional derivative `dT_K(z; v)`.
///
/// Blocks strictly below the K-th largest norm (`Λ1`) always contribute their slope.
/// Blocks tied with the K-th largest norm (`Λ2`) compete: only the
/// `m - K - |Λ1|` smallest slopes among them count. Ties are decided with
/// `|‖z_k‖ - ‖z_(K)‖| <= tie_tol` (pass zero for exact comparison).
pub fn directional_derivative<T: Scalar>(
    z: &BlockVector<T>,
    v: &BlockVector<T>,
    k: usize,
    tie_tol: T,
) -> Result<T> {
    z.check_same_shape(v)?;
    let m = z.m();
    let k = k.min(m);
    if k == m {
        return Ok(T::zero());
    }
    let norms = z.block_norms();
    let threshold = if k == 0 {
        T::infinity()
    } else {
        let mut sorted = norms.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        sorted[k - 1]
    };
    let mut total = T::zero();
    let mut lambda1 = 0usize;
    let mut tied: Vec<T> = Vec::new();
    for b in 0..m {
        let nb = norms[b];
        let is_tied = threshold.is_finite() && (nb - threshold).abs() <= tie_tol;
        if is_tied {
            tied.push(block_slope(z.block(b), v.block(b)));
        } else if nb < threshold {
            total += block_slope(z.block(b), v.block(b));
            lambda1 += 1;
        }
    }
    let need = (m - k).saturating_sub(lambda1).min(tied.len());
    tied.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    total += tied[..need].iter().copied().sum::<T>();
    Ok(total)
}
