//! Computable thresholds: the Network Lasso recovery interval `[γ_min, γ_max)` and
//! the exact-penalty level of `γ` for the trimmed formulation.

use serde::Serialize;

use crate::centroids::Centroids;
use crate::error::{check_dim, Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::cholesky_solve;
use crate::losses::LossSpec;
use crate::path::Partition;
use crate::scalar::{dist2, dot, norm2, serialize_extended, Scalar};

/// `a / b` with `a / 0 = ∞` for `a > 0`; a non-positive denominator also gives `∞`.
fn ratio<T: Scalar>(a: T, b: T) -> T {
    if b > T::zero() {
        a / b
    } else {
        T::infinity()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PairTerm<T: Scalar> {
    pub cluster: usize,
    pub i: usize,
    pub j: usize,
    pub mu: T,
    /// `n_k w_ij - μ_ij^(k)`; the premise needs it positive.
    pub denominator: T,
    #[serde(serialize_with = "serialize_extended")]
    pub gamma: T,
    pub premise_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport<T: Scalar> {
    pub n_k: Vec<usize>,
    /// `w^(k,k')`.
    pub cross_weights: Vec<Vec<T>>,
    /// `w_i^(k)`, one row per node.
    pub node_weights: Vec<Vec<T>>,
    pub mu: Vec<PairTerm<T>>,
    pub cluster_minimizers: Vec<Vec<T>>,
    pub alpha_k: Vec<T>,
    /// "sum" (`α_k = Σ_{i∈C_k} α_i`) or "supplied".
    pub alpha_source: &'static str,
    pub smoothness: Vec<T>,
    #[serde(serialize_with = "serialize_extended")]
    pub gamma_min: T,
    #[serde(serialize_with = "serialize_extended")]
    pub gamma_max: T,
    #[serde(serialize_with = "serialize_extended")]
    pub coarsening_bound: T,
    /// Every within-cluster pair satisfies `n_k w_ij > μ_ij^(k)`.
    pub pairs_ok: bool,
    /// All cluster minimizers are pairwise distinct.
    pub minimizers_distinct: bool,
    pub premise_ok: bool,
}

impl<T: Scalar> RecoveryReport<T> {
    /// True when the interval is non-empty and the premises hold.
    pub fn has_interval(&self) -> bool {
        self.premise_ok && self.gamma_min < self.gamma_max
    }

    /// A `γ` inside `[γ_min, γ_max)`: the midpoint, or `2γ_min` (1 when `γ_min = 0`)
    /// for an unbounded interval.
    pub fn midpoint(&self) -> Option<T> {
        if !self.has_interval() {
            return None;
        }
        if self.gamma_max.is_finite() {
            Some((self.gamma_min + self.gamma_max) / T::c(2.0))
        } else if self.gamma_min > T::zero() {
            Some(self.gamma_min * T::c(2.0))
        } else {
            Some(T::one())
        }
    }
}

struct ClusterSums<T> {
    clusters: Vec<Vec<usize>>,
    node_weights: Vec<Vec<T>>,
    cross: Vec<Vec<T>>,
}

fn cluster_sums<T: Scalar>(graph: &WeightedGraph<T>, partition: &Partition) -> Result<ClusterSums<T>> {
    check_dim(graph.n(), partition.n())?;
    let clusters = partition.clusters();
    let big_n = clusters.len();
    let labels = partition.labels();
    let mut node_weights = vec![vec![T::zero(); big_n]; graph.n()];
    let mut cross = vec![vec![T::zero(); big_n]; big_n];
    for (&(i, j), &w) in graph.edges().iter().zip(graph.weights()) {
        let (ki, kj) = (labels[i], labels[j]);
        node_weights[i][kj] += w;
        node_weights[j][ki] += w;
        cross[ki][kj] += w;
        cross[kj][ki] += w;
    }
    // w^(k,k) double counts each internal edge; only off-diagonal sums are used
    Ok(ClusterSums { clusters, node_weights, cross })
}

fn off_diagonal_sum<T: Scalar>(cross: &[Vec<T>], k: usize) -> T {
    cross[k].iter().enumerate().filter(|&(l, _)| l != k).map(|(_, &v)| v).sum()
}

/// All recovery-interval quantities for the partition `P`.
pub fn recovery_interval<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    partition: &Partition,
) -> Result<RecoveryReport<T>> {
    recovery_interval_with_alpha(losses, graph, partition, None)
}

/// As [`recovery_interval`], with optional user-supplied aggregate moduli `α_k`.
pub fn recovery_interval_with_alpha<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    partition: &Partition,
    alpha_k: Option<&[T]>,
) -> Result<RecoveryReport<T>> {
    check_dim(graph.n(), losses.n())?;
    let n = losses.n();
    for i in 0..n {
        if !(losses.strong_convexity(i) > T::zero()) {
            return Err(Error::NotStrictlyConvex { node: i });
        }
    }
    let sums = cluster_sums(graph, partition)?;
    let big_n = sums.clusters.len();
    if let Some(k) = sums.clusters.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCluster(k));
    }
    let (alphas, alpha_source) = match alpha_k {
        Some(a) => {
            check_dim(big_n, a.len())?;
            if let Some(k) = a.iter().position(|&v| !(v > T::zero())) {
                return Err(Error::param(format!("alpha_k for cluster {k} must be positive")));
            }
            (a.to_vec(), "supplied")
        }
        None => (
            sums.clusters
                .iter()
                .map(|c| c.iter().map(|&i| losses.strong_convexity(i)).sum())
                .collect::<Vec<T>>(),
            "sum",
        ),
    };
    let smooth: Vec<T> = (0..n).map(|i| losses.smoothness(i)).collect();
    let minimizers: Vec<Vec<T>> = sums
        .clusters
        .iter()
        .map(|c| losses.sum_loss_minimizer(c))
        .collect::<Result<_>>()?;
    let out_sum: Vec<T> = (0..big_n).map(|k| off_diagonal_sum(&sums.cross, k)).collect();

    let mut gamma_max = T::infinity();
    let mut distinct = true;
    for k in 0..big_n {
        for l in (k + 1)..big_n {
            let d = dist2(&minimizers[k], &minimizers[l]);
            let scale = T::one() + norm2(&minimizers[k]) + norm2(&minimizers[l]);
            if d <= T::c(1e-9) * scale {
                distinct = false;
            }
            let denom = out_sum[k] / alphas[k] + out_sum[l] / alphas[l];
            gamma_max = gamma_max.min(ratio(d, denom));
        }
    }

    let p = losses.p();
    let mut gi = vec![T::zero(); p];
    let mut gj = vec![T::zero(); p];
    let mut terms = Vec::new();
    let mut gamma_min = T::zero();
    let mut pairs_ok = true;
    for (k, members) in sums.clusters.iter().enumerate() {
        let nk = T::from_usize_lossy(members.len());
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let spread: T = (0..big_n)
                    .filter(|&l| l != k)
                    .map(|l| (sums.node_weights[i][l] - sums.node_weights[j][l]).abs())
                    .sum();
                let mu = spread + (smooth[i] + smooth[j]) / alphas[k] * out_sum[k];
                let denominator = nk * graph.weight(i, j) - mu;
                losses.gradient_into(j, &minimizers[k], &mut gj);
                losses.gradient_into(i, &minimizers[k], &mut gi);
                let diff: Vec<T> = gj.iter().zip(&gi).map(|(&u, &v)| u - v).collect();
                let ok = denominator > T::zero();
                pairs_ok &= ok;
                let gamma = ratio(norm2(&diff), denominator);
                gamma_min = gamma_min.max(gamma);
                terms.push(PairTerm { cluster: k, i, j, mu, denominator, gamma, premise_ok: ok });
            }
        }
    }

    let all: Vec<usize> = (0..n).collect();
    let xbar = losses.sum_loss_minimizer(&all)?;
    let mut coarsening = T::zero();
    for (k, members) in sums.clusters.iter().enumerate() {
        let mut g = vec![T::zero(); p];
        for &i in members {
            losses.gradient_into(i, &xbar, &mut gi);
            g.iter_mut().zip(&gi).for_each(|(a, &b)| *a += b);
        }
        let num = norm2(&g);
        if num > T::zero() || out_sum[k] > T::zero() {
            coarsening = coarsening.max(ratio(num, out_sum[k]));
        }
    }

    Ok(RecoveryReport {
        n_k: sums.clusters.iter().map(Vec::len).collect(),
        cross_weights: sums.cross,
        node_weights: sums.node_weights,
        mu: terms,
        cluster_minimizers: minimizers,
        alpha_k: alphas,
        alpha_source,
        smoothness: smooth,
        gamma_min,
        gamma_max,
        coarsening_bound: coarsening,
        pairs_ok,
        minimizers_distinct: distinct,
        premise_ok: pairs_ok && distinct,
    })
}

/// Convex-clustering thresholds `(γ'_min, γ'_max)` built from cluster means and sizes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClusteringInterval<T: Scalar> {
    #[serde(serialize_with = "serialize_extended")]
    pub gamma_min_prime: T,
    #[serde(serialize_with = "serialize_extended")]
    pub gamma_max_prime: T,
}

pub fn recovery_interval_cc<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    partition: &Partition,
) -> Result<ClusteringInterval<T>> {
    let LossSpec::SquaredDistance { points } = losses else {
        return Err(Error::param(format!(
            "the clustering interval needs squared-distance losses, got {}",
            losses.kind()
        )));
    };
    check_dim(graph.n(), points.n())?;
    let sums = cluster_sums(graph, partition)?;
    let big_n = sums.clusters.len();
    let p = points.p();
    let means: Vec<Vec<T>> = sums
        .clusters
        .iter()
        .map(|c| {
            let mut m = vec![T::zero(); p];
            for &i in c {
                m.iter_mut().zip(points.row(i)).for_each(|(a, &b)| *a += b);
            }
            let nk = T::from_usize_lossy(c.len().max(1));
            m.iter_mut().for_each(|a| *a /= nk);
            m
        })
        .collect();
    let sizes: Vec<T> = sums.clusters.iter().map(|c| T::from_usize_lossy(c.len())).collect();
    let out_sum: Vec<T> = (0..big_n).map(|k| off_diagonal_sum(&sums.cross, k)).collect();
    let mut gmax = T::infinity();
    for k in 0..big_n {
        for l in (k + 1)..big_n {
            let denom = out_sum[k] / sizes[k] + out_sum[l] / sizes[l];
            gmax = gmax.min(ratio(dist2(&means[k], &means[l]), denom));
        }
    }
    let mut gmin = T::zero();
    for (k, members) in sums.clusters.iter().enumerate() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let spread: T = (0..big_n)
                    .filter(|&l| l != k)
                    .map(|l| (sums.node_weights[i][l] - sums.node_weights[j][l]).abs())
                    .sum();
                let denom = sizes[k] * graph.weight(i, j) - spread;
                gmin = gmin.max(ratio(dist2(points.row(i), points.row(j)), denom));
            }
        }
    }
    Ok(ClusteringInterval { gamma_min_prime: gmin, gamma_max_prime: gmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Supplied,
    Clustering,
    StronglyConvex,
    Quadratic,
}

#[derive(Debug, Clone, Serialize)]
pub struct PenaltyThreshold<T: Scalar> {
    pub bound_c: T,
    /// `Σ_i (‖∇f_i(0)‖ + 2 L_i C)`.
    pub gamma_star: T,
    pub method: BoundMethod,
    /// `3nC`, reported for clustering losses.
    #[serde(rename = "3nC", skip_serializing_if = "Option::is_none")]
    pub three_n_c: Option<T>,
    /// True when the threshold is zero (every `∇f_i(0) = 0` and `C = 0`).
    pub degenerate: bool,
}

/// `Σ_i (‖∇f_i(0)‖ + 2 L_i C)`; any `γ` strictly above it makes the trimmed
/// penalty exact for solutions bounded by `C`.
pub fn exact_penalty_threshold<T: Scalar>(losses: &LossSpec<T>, c: T) -> Result<PenaltyThreshold<T>> {
    threshold_with(losses, c, BoundMethod::Supplied)
}

fn threshold_with<T: Scalar>(losses: &LossSpec<T>, c: T, method: BoundMethod) -> Result<PenaltyThreshold<T>> {
    if !(c >= T::zero()) || !c.is_finite() {
        return Err(Error::param(format!("bound C must be finite and non-negative, got {c}")));
    }
    let p = losses.p();
    let zero = vec![T::zero(); p];
    let mut g = vec![T::zero(); p];
    let mut total = T::zero();
    for i in 0..losses.n() {
        let l = losses.smoothness(i);
        if !l.is_finite() {
            return Err(Error::param(format!("smoothness constant of node {i} is not finite")));
        }
        losses.gradient_into(i, &zero, &mut g);
        total += norm2(&g) + T::c(2.0) * l * c;
    }
    let three_n_c = (method == BoundMethod::Clustering).then(|| T::c(3.0) * T::from_usize_lossy(losses.n()) * c);
    Ok(PenaltyThreshold { bound_c: c, gamma_star: total, method, three_n_c, degenerate: total == T::zero() })
}

/// `C = max_i ‖a_i‖` for the clustering loss.
pub fn bound_c_clustering<T: Scalar>(points: &Centroids<T>) -> T {
    points.max_row_norm()
}

/// `C = (2/α Σ_j (f_j(0) - f_j(x̄_j)))^{1/2} + max_i ‖x̄_i‖` with `α = min_i α_i`.
pub fn bound_c_strongly_convex<T: Scalar>(losses: &LossSpec<T>) -> Result<T> {
    let alpha = losses.min_strong_convexity();
    if !(alpha > T::zero()) {
        let node = (0..losses.n()).find(|&i| !(losses.strong_convexity(i) > T::zero())).unwrap_or(0);
        return Err(Error::NotStrictlyConvex { node });
    }
    let zero = vec![T::zero(); losses.p()];
    let mut gap = T::zero();
    let mut max_norm = T::zero();
    for i in 0..losses.n() {
        let xb = losses.minimizer(i).ok_or(Error::NotStrictlyConvex { node: i })?;
        gap += losses.eval_unchecked(i, &zero) - losses.eval_unchecked(i, &xb);
        max_norm = max_norm.max(norm2(&xb));
    }
    Ok((T::c(2.0) / alpha * gap.max(T::zero())).sqrt() + max_norm)
}

/// `C = ((1/α) Σ_i B_iᵀA_i⁻¹B_i)^{1/2} + max_i ‖A_i⁻¹B_i‖` with `α = min_i λ_min(A_i)`,
/// for any loss with a quadratic form `∇f_i(x) = A_i x - B_i`.
pub fn bound_c_quadratic<T: Scalar>(losses: &LossSpec<T>) -> Result<T> {
    if !losses.is_quadratic() {
        return Err(Error::param("the quadratic bound needs a quadratic loss"));
    }
    let p = losses.p();
    let alpha = losses.min_strong_convexity();
    let mut quad = T::zero();
    let mut max_norm = T::zero();
    for i in 0..losses.n() {
        let (a, b) = losses.quadratic_form(i).expect("quadratic kind");
        let sol = cholesky_solve(&a, p, &b).map_err(|_| Error::NotStrictlyConvex { node: i })?;
        quad += dot(&b, &sol);
        max_norm = max_norm.max(norm2(&sol));
    }
    if !(alpha > T::zero()) {
        return Err(Error::NotStrictlyConvex { node: 0 });
    }
    Ok((quad / alpha).sqrt() + max_norm)
}

/// Threshold with `C` from [`bound_c_clustering`]; requires squared-distance losses.
pub fn clustering_threshold<T: Scalar>(losses: &LossSpec<T>) -> Result<PenaltyThreshold<T>> {
    let LossSpec::SquaredDistance { points } = losses else {
        return Err(Error::param("clustering threshold needs squared-distance losses"));
    };
    threshold_with(losses, bound_c_clustering(points), BoundMethod::Clustering)
}

pub fn strongly_convex_threshold<T: Scalar>(losses: &LossSpec<T>) -> Result<PenaltyThreshold<T>> {
    threshold_with(losses, bound_c_strongly_convex(losses)?, BoundMethod::StronglyConvex)
}

pub fn quadratic_threshold<T: Scalar>(losses: &LossSpec<T>) -> Result<PenaltyThreshold<T>> {
    threshold_with(losses, bound_c_quadratic(losses)?, BoundMethod::Quadratic)
}
