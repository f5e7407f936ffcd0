//! Per-node smooth convex losses `f_i : R^p -> R`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::centroids::Centroids;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_solve, eig2, sym_eigenvalues};
use crate::scalar::{dot, norm2, Scalar};

/// User-supplied loss for one node. `smoothness` must upper-bound the gradient
/// Lipschitz constant and `strong_convexity` must lower-bound the modulus (0 if unknown).
pub trait NodeLoss<T>: Debug + Send + Sync {
    fn eval(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T], out: &mut [T]);
    fn smoothness(&self) -> T;
    fn strong_convexity(&self) -> T;
    fn minimizer(&self) -> Option<Vec<T>> {
        None
    }
}

#[derive(Debug, Clone)]
pub enum LossSpec<T> {
    /// `½‖x - a_i‖²`, the convex clustering loss.
    SquaredDistance { points: Centroids<T> },
    /// `½(b_i - x₁ - a_i x₂)² + (ε/2) x₂²` with `x = (intercept, slope)`.
    Ridge { a: Vec<T>, b: Vec<T>, eps: T },
    /// `½ xᵀA_i x - B_iᵀx`; `A_i` row-major `p × p`.
    Quadratic { p: usize, a: Vec<Vec<T>>, b: Vec<Vec<T>> },
    Custom { p: usize, nodes: Vec<Arc<dyn NodeLoss<T>>> },
}

impl<T: Scalar> LossSpec<T> {
    pub fn squared_distance(points: &[Vec<T>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("at least one point is required"));
        }
        Ok(LossSpec::SquaredDistance { points: Centroids::from_rows(points)? })
    }

    pub fn ridge(a: Vec<T>, b: Vec<T>, eps: T) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        if a.is_empty() {
            return Err(Error::param("at least one sample is required"));
        }
        if !(eps >= T::zero()) {
            return Err(Error::param(format!("ridge eps must be non-negative, got {eps}")));
        }
        Ok(LossSpec::Ridge { a, b, eps })
    }

    pub fn quadratic(p: usize, a: Vec<Vec<T>>, b: Vec<Vec<T>>) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        if a.is_empty() {
            return Err(Error::param("at least one node is required"));
        }
        for (ai, bi) in a.iter().zip(&b) {
            check_dim(p * p, ai.len())?;
            check_dim(p, bi.len())?;
            for r in 0..p {
                for c in 0..r {
                    let (u, v) = (ai[r * p + c], ai[c * p + r]);
                    if (u - v).abs() > T::c(1e-12) * (T::one() + u.abs().max(v.abs())) {
                        return Err(Error::param("quadratic loss matrix must be symmetric"));
                    }
                }
            }
        }
        Ok(LossSpec::Quadratic { p, a, b })
    }

    /// Registers user losses. Debug builds check gradients against central differences.
    pub fn custom(p: usize, nodes: Vec<Arc<dyn NodeLoss<T>>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::param("at least one node is required"));
        }
        if cfg!(debug_assertions) {
            for (i, f) in nodes.iter().enumerate() {
                check_gradient(f.as_ref(), p).map_err(|e| Error::param(format!("node {i}: {e}")))?;
            }
        }
        Ok(LossSpec::Custom { p, nodes })
    }

    pub fn n(&self) -> usize {
        match self {
            LossSpec::SquaredDistance { points } => points.n(),
            LossSpec::Ridge { a, .. } => a.len(),
            LossSpec::Quadratic { a, .. } => a.len(),
            LossSpec::Custom { nodes, .. } => nodes.len(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            LossSpec::SquaredDistance { points } => points.p(),
            LossSpec::Ridge { .. } => 2,
            LossSpec::Quadratic { p, .. } | LossSpec::Custom { p, .. } => *p,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LossSpec::SquaredDistance { .. } => "squared-distance",
            LossSpec::Ridge { .. } => "ridge",
            LossSpec::Quadratic { .. } => "quadratic",
            LossSpec::Custom { .. } => "custom",
        }
    }

    fn check_node(&self, i: usize, x: &[T]) -> Result<()> {
        if i >= self.n() {
            return Err(Error::param(format!("node {i} out of range")));
        }
        check_dim(self.p(), x.len())
    }

    pub fn eval(&self, i: usize, x: &[T]) -> Result<T> {
        self.check_node(i, x)?;
        Ok(self.eval_unchecked(i, x))
    }

    pub(crate) fn eval_unchecked(&self, i: usize, x: &[T]) -> T {
        let half = T::c(0.5);
        match self {
            LossSpec::SquaredDistance { points } => {
                let a = points.row(i);
                half * x.iter().zip(a).map(|(&u, &v)| (u - v) * (u - v)).sum::<T>()
            }
            LossSpec::Ridge { a, b, eps } => {
                let r = b[i] - x[0] - a[i] * x[1];
                half * r * r + half * *eps * x[1] * x[1]
            }
            LossSpec::Quadratic { p, a, b } => {
                let ai = &a[i];
                let mut quad = T::zero();
                for r in 0..*p {
                    quad += x[r] * dot(&ai[r * p..(r + 1) * p], x);
                }
                half * quad - dot(&b[i], x)
            }
            LossSpec::Custom { nodes, .. } => nodes[i].eval(x),
        }
    }

    pub fn gradient(&self, i: usize, x: &[T]) -> Result<Vec<T>> {
        self.check_node(i, x)?;
        let mut g = vec![T::zero(); x.len()];
        self.gradient_into(i, x, &mut g);
        Ok(g)
    }

    pub(crate) fn gradient_into(&self, i: usize, x: &[T], out: &mut [T]) {
        match self {
            LossSpec::SquaredDistance { points } => {
                for ((o, &u), &v) in out.iter_mut().zip(x).zip(points.row(i)) {
                    *o = u - v;
                }
            }
            LossSpec::Ridge { a, b, eps } => {
                let r = b[i] - x[0] - a[i] * x[1];
                out[0] = -r;
                out[1] = -r * a[i] + *eps * x[1];
            }
            LossSpec::Quadratic { p, a, b } => {
                for r in 0..*p {
                    out[r] = dot(&a[i][r * p..(r + 1) * p], x) - b[i][r];
                }
            }
            LossSpec::Custom { nodes, .. } => nodes[i].gradient(x, out),
        }
    }

    /// `f(𝒙) = Σ_i f_i(x_i)`.
    pub fn total(&self, x: &Centroids<T>) -> Result<T> {
        check_dim(self.n(), x.n())?;
        check_dim(self.p(), x.p())?;
        Ok((0..self.n()).map(|i| self.eval_unchecked(i, x.row(i))).sum())
    }

    pub fn total_gradient(&self, x: &Centroids<T>) -> Result<Centroids<T>> {
        check_dim(self.n(), x.n())?;
        check_dim(self.p(), x.p())?;
        let mut g = Centroids::zeros(x.n(), x.p());
        for i in 0..x.n() {
            self.gradient_into(i, x.row(i), g.row_mut(i));
        }
        Ok(g)
    }

    /// Smoothness constant `L_i`.
    pub fn smoothness(&self, i: usize) -> T {
        match self {
            LossSpec::SquaredDistance { .. } => T::one(),
            LossSpec::Ridge { a, eps, .. } => eig2(T::one(), a[i], a[i] * a[i] + *eps).1,
            LossSpec::Quadratic { p, a, .. } => *sym_eigenvalues(&a[i], *p).last().unwrap_or(&T::zero()),
            LossSpec::Custom { nodes, .. } => nodes[i].smoothness(),
        }
    }

    /// Strong convexity constant `α_i` (zero when the loss is merely convex).
    pub fn strong_convexity(&self, i: usize) -> T {
        let raw = match self {
            LossSpec::SquaredDistance { .. } => T::one(),
            LossSpec::Ridge { a, eps, .. } => eig2(T::one(), a[i], a[i] * a[i] + *eps).0,
            LossSpec::Quadratic { p, a, .. } => *sym_eigenvalues(&a[i], *p).first().unwrap_or(&T::zero()),
            LossSpec::Custom { nodes, .. } => nodes[i].strong_convexity(),
        };
        raw.max(T::zero())
    }

    pub fn max_smoothness(&self) -> T {
        (0..self.n()).map(|i| self.smoothness(i)).fold(T::zero(), T::max)
    }

    pub fn min_strong_convexity(&self) -> T {
        (0..self.n()).map(|i| self.strong_convexity(i)).fold(T::infinity(), T::min)
    }

    /// Hessian `H_i` (row-major) and linear term `g_i` with `∇f_i(x) = H_i x - g_i`,
    /// for the quadratic loss kinds.
    pub fn quadratic_form(&self, i: usize) -> Option<(Vec<T>, Vec<T>)> {
        match self {
            LossSpec::SquaredDistance { points } => {
                let p = points.p();
                let mut h = vec![T::zero(); p * p];
                for r in 0..p {
                    h[r * p + r] = T::one();
                }
                Some((h, points.row(i).to_vec()))
            }
            LossSpec::Ridge { a, b, eps } => {
                let ai = a[i];
                Some((vec![T::one(), ai, ai, ai * ai + *eps], vec![b[i], ai * b[i]]))
            }
            LossSpec::Quadratic { a, b, .. } => Some((a[i].clone(), b[i].clone())),
            LossSpec::Custom { .. } => None,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        !matches!(self, LossSpec::Custom { .. })
    }

    /// Unique minimizer `x̄_i`, or `None` when `f_i` is not strictly convex.
    pub fn minimizer(&self, i: usize) -> Option<Vec<T>> {
        match self {
            LossSpec::SquaredDistance { points } => Some(points.row(i).to_vec()),
            LossSpec::Custom { nodes, .. } => nodes[i].minimizer(),
            _ => {
                let (h, g) = self.quadratic_form(i)?;
                cholesky_solve(&h, self.p(), &g).ok()
            }
        }
    }

    /// Stacked per-node minimizers.
    pub fn minimizers(&self) -> Result<Centroids<T>> {
        let mut x = Centroids::zeros(self.n(), self.p());
        for i in 0..self.n() {
            let m = self.minimizer(i).ok_or(Error::NotStrictlyConvex { node: i })?;
            x.row_mut(i).copy_from_slice(&m);
        }
        Ok(x)
    }

    /// Minimizer of the aggregate `Σ_{i∈subset} f_i`.
    pub fn sum_loss_minimizer(&self, subset: &[usize]) -> Result<Vec<T>> {
        if subset.is_empty() {
            return Err(Error::param("empty node subset"));
        }
        if let Some(&i) = subset.iter().find(|&&i| i >= self.n()) {
            return Err(Error::param(format!("node {i} out of range")));
        }
        let p = self.p();
        if let LossSpec::SquaredDistance { points } = self {
            let mut mean = vec![T::zero(); p];
            for &i in subset {
                for (m, &v) in mean.iter_mut().zip(points.row(i)) {
                    *m += v;
                }
            }
            let k = T::from_usize_lossy(subset.len());
            mean.iter_mut().for_each(|m| *m /= k);
            return Ok(mean);
        }
        if self.is_quadratic() {
            let mut h = vec![T::zero(); p * p];
            let mut g = vec![T::zero(); p];
            for &i in subset {
                let (hi, gi) = self.quadratic_form(i).expect("quadratic kind");
                h.iter_mut().zip(&hi).for_each(|(a, &b)| *a += b);
                g.iter_mut().zip(&gi).for_each(|(a, &b)| *a += b);
            }
            return cholesky_solve(&h, p, &g).map_err(|_| Error::AggregateNotStrictlyConvex);
        }
        if subset.len() == 1 {
            if let Some(m) = self.minimizer(subset[0]) {
                return Ok(m);
            }
        }
        self.aggregate_gradient_descent(subset)
    }

    fn aggregate_gradient_descent(&self, subset: &[usize]) -> Result<Vec<T>> {
        let alpha: T = subset.iter().map(|&i| self.strong_convexity(i)).sum();
        if !(alpha > T::zero()) {
            return Err(Error::AggregateNotStrictlyConvex);
        }
        let lip: T = subset.iter().map(|&i| self.smoothness(i)).sum();
        let p = self.p();
        let mut x = vec![T::zero(); p];
        let mut g = vec![T::zero(); p];
        let mut gi = vec![T::zero(); p];
        let tol = T::epsilon().sqrt() * T::c(1e-4);
        for _ in 0..200_000 {
            g.iter_mut().for_each(|v| *v = T::zero());
            for &i in subset {
                self.gradient_into(i, &x, &mut gi);
                g.iter_mut().zip(&gi).for_each(|(a, &b)| *a += b);
            }
            if norm2(&g) <= tol * lip.max(T::one()) {
                break;
            }
            x.iter_mut().zip(&g).for_each(|(a, &b)| *a -= b / lip);
        }
        Ok(x)
    }
}

fn check_gradient<T: Scalar>(f: &dyn NodeLoss<T>, p: usize) -> std::result::Result<(), String> {
    let h = T::c(1e-6);
    for s in 0..3 {
        let x: Vec<T> = (0..p)
            .map(|j| T::c(0.37 * (j as f64 + 1.0) * if (s + j) % 2 == 0 { 1.0 } else { -1.3 }))
            .collect();
        let mut g = vec![T::zero(); p];
        f.gradient(&x, &mut g);
        for j in 0..p {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (f.eval(&xp) - f.eval(&xm)) / (h + h);
            let tol = T::c(1e-5) * (T::one() + g[j].abs().max(fd.abs()));
            if (fd - g[j]).abs() > tol {
                return Err(format!("gradient component {j} is {} but finite differences give {fd}", g[j]));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let sd = LossSpec::<f64>::squared_distance(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(sd.eval(0, &[1.0, 2.0]).unwrap(), 0.0);
        let r = LossSpec::<f64>::ridge(vec![0.0], vec![0.0], 1e-2).unwrap();
        assert!((r.eval(0, &[0.0, 1.0]).unwrap() - 0.005).abs() < 1e-15);
        let q = LossSpec::<f64>::quadratic(2, vec![vec![1.0, 0.0, 0.0, 1.0]], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(q.eval(0, &[3.0, 4.0]).unwrap(), 12.5);
    }

    #[test]
    fn dimension_checks() {
        let sd = LossSpec::<f64>::squared_distance(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(sd.eval(0, &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(sd.gradient(3, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn curvature_constants() {
        let q = LossSpec::<f64>::quadratic(2, vec![vec![2.0, 0.0, 0.0, 5.0]], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(q.smoothness(0), 5.0);
        assert_eq!(q.strong_convexity(0), 2.0);
        let r = LossSpec::<f64>::ridge(vec![0.0, 1.0], vec![0.0, 0.0], 0.01).unwrap();
        assert!((r.smoothness(0) - 1.0).abs() < 1e-15);
        // [[1,1],[1,1.01]]: roots of λ² - 2.01λ + 0.01
        let disc: f64 = 2.01 * 2.01 - 0.04;
        let lo = (2.01 - disc.sqrt()) / 2.0;
        let a1 = r.strong_convexity(1);
        assert!((a1 - lo).abs() < 1e-12);
        assert!(a1 > 0.0 && a1 < 0.01);
    }

    #[test]
    fn minimizers() {
        let q = LossSpec::<f64>::quadratic(2, vec![vec![2.0, 0.0, 0.0, 2.0]], vec![vec![2.0, 4.0]]).unwrap();
        let m = q.minimizer(0).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-14 && (m[1] - 2.0).abs() < 1e-14);
        let r = LossSpec::<f64>::ridge(vec![0.3, -1.2], vec![1.5, 0.7], 1e-2).unwrap();
        for i in 0..2 {
            let m = r.minimizer(i).unwrap();
            assert!(norm2(&r.gradient(i, &m).unwrap()) <= 1e-10);
        }
        let flat = LossSpec::<f64>::ridge(vec![0.3], vec![1.5], 0.0).unwrap();
        assert!(flat.minimizer(0).is_none());
    }

    #[test]
    fn aggregate_minimizers() {
        let sd = LossSpec::<f64>::squared_distance(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(sd.sum_loss_minimizer(&[0, 1]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(sd.sum_loss_minimizer(&[1]).unwrap(), vec![2.0, 0.0]);
        let q = LossSpec::<f64>::quadratic(
            2,
            vec![vec![2.0, 0.5, 0.5, 1.0], vec![1.0, -0.2, -0.2, 3.0]],
            vec![vec![1.0, 0.0], vec![0.0, 2.0]],
        )
        .unwrap();
        let x = q.sum_loss_minimizer(&[0, 1]).unwrap();
        // (A0 + A1) x = B0 + B1 with A0 + A1 = [[3, 0.3], [0.3, 4]]
        let r0: f64 = 3.0 * x[0] + 0.3 * x[1] - 1.0;
        let r1: f64 = 0.3 * x[0] + 4.0 * x[1] - 2.0;
        assert!(r0.abs() < 1e-13 && r1.abs() < 1e-13);
        let flat = LossSpec::<f64>::ridge(vec![0.3, 0.3], vec![1.0, 2.0], 0.0).unwrap();
        assert!(matches!(flat.sum_loss_minimizer(&[0, 1]), Err(Error::AggregateNotStrictlyConvex)));
    }

    #[derive(Debug)]
    struct Quartic;

    impl NodeLoss<f64> for Quartic {
        fn eval(&self, x: &[f64]) -> f64 {
            x.iter().map(|v| 0.5 * v * v + 0.1 * (v - 1.0).powi(2)).sum()
        }
        fn gradient(&self, x: &[f64], out: &mut [f64]) {
            for (o, v) in out.iter_mut().zip(x) {
                *o = v + 0.2 * (v - 1.0);
            }
        }
        fn smoothness(&self) -> f64 {
            1.2
        }
        fn strong_convexity(&self) -> f64 {
            1.2
        }
    }

    #[derive(Debug)]
    struct Wrong;

    impl NodeLoss<f64> for Wrong {
        fn eval(&self, x: &[f64]) -> f64 {
            x[0] * x[0]
        }
        fn gradient(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0];
        }
        fn smoothness(&self) -> f64 {
            2.0
        }
        fn strong_convexity(&self) -> f64 {
            2.0
        }
    }

    #[test]
    fn custom_losses() {
        let spec = LossSpec::custom(1, vec![Arc::new(Quartic), Arc::new(Quartic)]).unwrap();
        let x = spec.sum_loss_minimizer(&[0, 1]).unwrap();
        assert!((x[0] - 0.2 / 1.2).abs() < 1e-9);
        assert!(LossSpec::custom(1, vec![Arc::new(Wrong) as Arc<dyn NodeLoss<f64>>]).is_err());
    }
}
