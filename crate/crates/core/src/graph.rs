//! Weighted undirected graphs, weight schemes and the edge-difference operator `D`.
//!
//! Edges are stored as pairs `(i, j)` with `i < j`, sorted lexicographically. That
//! order fixes the block layout of every edge-indexed vector (`z`, `y`, `D x`).

use std::fmt::Write as _;

use serde::Serialize;

use crate::centroids::Centroids;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{sym_eigenvalues, BandedCholesky};
use crate::penalty::BlockVector;
use crate::scalar::{dist2, Scalar};

/// How edge weights are assigned when building a graph.
#[derive(Debug, Clone, Copy)]
pub enum WeightScheme<'a, T> {
    /// Every edge gets weight 1.
    Uniform,
    /// `w_ij = exp(-alpha ‖a_i - a_j‖²)` over the given points.
    Gaussian { points: &'a [Vec<T>], alpha: T },
}

impl<T: Scalar> WeightScheme<'_, T> {
    fn weight(&self, i: usize, j: usize) -> T {
        match self {
            WeightScheme::Uniform => T::one(),
            WeightScheme::Gaussian { points, alpha } => gaussian_weight(&points[i], &points[j], *alpha),
        }
    }
}

pub fn gaussian_weight<T: Scalar>(a: &[T], b: &[T], alpha: T) -> T {
    let d = dist2(a, b);
    (-alpha * d * d).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedGraph<T> {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<T>,
}

impl<T: Scalar> WeightedGraph<T> {
    /// Builds a graph from `(i, j, w)` triples in any order. Pairs are normalized
    /// to `i < j` and sorted; self-loops, duplicates and negative or non-finite
    /// weights are rejected.
    pub fn new(n: usize, triples: impl IntoIterator<Item = (usize, usize, T)>) -> Result<Self> {
        let mut list: Vec<(usize, usize, T)> = Vec::new();
        for (i, j, w) in triples {
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {i}")));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge {{{i},{j}}} out of range for n={n}")));
            }
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(Error::InvalidGraph(format!("edge {{{i},{j}}} has invalid weight {w}")));
            }
            list.push((i.min(j), i.max(j), w));
        }
        list.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for pair in list.windows(2) {
            if (pair[0].0, pair[0].1) == (pair[1].0, pair[1].1) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {{{},{}}}",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let edges = list.iter().map(|&(i, j, _)| (i, j)).collect();
        let weights = list.into_iter().map(|(_, _, w)| w).collect();
        Ok(Self { n, edges, weights })
    }

    /// Complete graph on `n` vertices.
    pub fn complete(n: usize, scheme: WeightScheme<'_, T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("complete graph needs n >= 1"));
        }
        if let WeightScheme::Gaussian { points, .. } = scheme {
            check_dim(n, points.len())?;
        }
        let mut edges = Vec::with_capacity(n * (n - 1) / 2);
        let mut weights = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                edges.push((i, j));
                weights.push(scheme.weight(i, j));
            }
        }
        Ok(Self { n, edges, weights })
    }

    /// Symmetric k-nearest-neighbour graph with Gaussian weights: `{i, j}` is an edge
    /// iff `j` is among the `k` nearest neighbours of `i` or vice versa. Distance
    /// ties are broken by the smaller index. `k >= n` yields the complete graph.
    pub fn knn_gaussian(points: &[Vec<T>], k: usize, alpha: T) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::param("knn graph needs at least one point"));
        }
        if k == 0 {
            return Err(Error::param("knn graph needs k >= 1"));
        }
        if !(alpha > T::zero()) {
            return Err(Error::param("gaussian alpha must be positive"));
        }
        let p = points[0].len();
        for pt in points {
            check_dim(p, pt.len())?;
        }
        let scheme = WeightScheme::Gaussian { points, alpha };
        if k >= n - 1 {
            return Self::complete(n, scheme);
        }
        let mut adjacent = vec![false; n * n];
        let mut order: Vec<(T, usize)> = Vec::with_capacity(n);
        for i in 0..n {
            order.clear();
            order.extend((0..n).filter(|&j| j != i).map(|j| (dist2(&points[i], &points[j]), j)));
            order.sort_by(|a, b| {
                a.0.partial_cmp(&b.0)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.1.cmp(&b.1))
            });
            for &(_, j) in order.iter().take(k) {
                adjacent[i.min(j) * n + i.max(j)] = true;
            }
        }
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if adjacent[i * n + j] {
                    edges.push((i, j));
                    weights.push(scheme.weight(i, j));
                }
            }
        }
        Ok(Self { n, edges, weights })
    }

    /// Chain `0 - 1 - … - (n-1)` with unit weights.
    pub fn path(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("path graph needs n >= 2"));
        }
        Ok(Self {
            n,
            edges: (0..n - 1).map(|i| (i, i + 1)).collect(),
            weights: vec![T::one(); n - 1],
        })
    }

    /// Parses the `i j w` edge-list format. Blank lines and `#` comments are skipped.
    /// When `n` is `None` the vertex count is one past the largest index.
    pub fn from_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut triples = Vec::new();
        let mut max_idx = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected `i j w`, got {} fields",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse_idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: bad vertex `{s}`: {e}", lineno + 1)))
            };
            let i = parse_idx(fields[0])?;
            let j = parse_idx(fields[1])?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad weight `{}`: {e}", lineno + 1, fields[2])))?;
            max_idx = max_idx.max(i).max(j);
            triples.push((i, j, T::c(w)));
        }
        let n = n.unwrap_or(if triples.is_empty() { 0 } else { max_idx + 1 });
        Self::new(n, triples)
    }

    /// Writes the `i j w` edge-list format with round-trip precision.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (&(i, j), w) in self.edges.iter().zip(&self.weights) {
            let _ = writeln!(out, "{i} {j} {}", w.as_f64());
        }
        out
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Weight of `{i, j}`; absent edges read as zero.
    pub fn weight(&self, i: usize, j: usize) -> T {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search(&key)
            .map(|k| self.weights[k])
            .unwrap_or(T::zero())
    }

    /// Same edges, every weight replaced by one.
    pub fn with_unit_weights(&self) -> Self {
        Self { n: self.n, edges: self.edges.clone(), weights: vec![T::one(); self.m()] }
    }

    /// Dense symmetric weight matrix with zeros off the edge set.
    pub fn weight_matrix(&self) -> Vec<T> {
        let n = self.n;
        let mut w = vec![T::zero(); n * n];
        for (&(i, j), &wij) in self.edges.iter().zip(&self.weights) {
            w[i * n + j] = wij;
            w[j * n + i] = wij;
        }
        w
    }

    /// True when the edges are exactly `{i, i+1}` for `i = 0..n-1`.
    pub fn is_path(&self) -> bool {
        self.n >= 2
            && self.m() == self.n - 1
            && self.edges.iter().enumerate().all(|(k, &e)| e == (k, k + 1))
    }

    /// Largest `|i - j|` over the edges.
    pub fn max_span(&self) -> usize {
        self.edges.iter().map(|&(i, j)| j - i).max().unwrap_or(0)
    }

    /// True when the edge set has no cycle.
    pub fn is_forest(&self) -> bool {
        let mut uf = UnionFind::new(self.n);
        self.edges.iter().all(|&(i, j)| uf.union(i, j))
    }

    pub fn difference_operator(&self, p: usize) -> DifferenceOperator<'_, T> {
        DifferenceOperator { graph: self, p }
    }
}

/// The stacked edge-difference map `(D x)_{i,j} = x_i - x_j`, applied matrix-free.
#[derive(Debug, Clone, Copy)]
pub struct DifferenceOperator<'a, T> {
    graph: &'a WeightedGraph<T>,
    p: usize,
}

impl<'a, T: Scalar> DifferenceOperator<'a, T> {
    pub fn graph(&self) -> &'a WeightedGraph<T> {
        self.graph
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Block count `m`.
    pub fn blocks(&self) -> usize {
        self.graph.m()
    }

    /// Domain dimension `N = n p`.
    pub fn domain_dim(&self) -> usize {
        self.graph.n() * self.p
    }

    pub fn apply(&self, x: &Centroids<T>) -> Result<BlockVector<T>> {
        check_dim(self.graph.n(), x.n())?;
        check_dim(self.p, x.p())?;
        let mut out = BlockVector::zeros(self.blocks(), self.p);
        self.apply_slice(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub fn apply_transpose(&self, z: &BlockVector<T>) -> Result<Centroids<T>> {
        check_dim(self.blocks(), z.m())?;
        check_dim(self.p, z.p())?;
        let mut out = Centroids::zeros(self.graph.n(), self.p);
        self.apply_transpose_slice(z.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `out = D x` on flat storage; `x` has `n p` and `out` has `m p` entries.
    pub(crate) fn apply_slice(&self, x: &[T], out: &mut [T]) {
        let p = self.p;
        for (k, &(i, j)) in self.graph.edges.iter().enumerate() {
            for d in 0..p {
                out[k * p + d] = x[i * p + d] - x[j * p + d];
            }
        }
    }

    /// `out = Dᵀ z` on flat storage.
    pub(crate) fn apply_transpose_slice(&self, z: &[T], out: &mut [T]) {
        let p = self.p;
        out.iter_mut().for_each(|v| *v = T::zero());
        for (k, &(i, j)) in self.graph.edges.iter().enumerate() {
            for d in 0..p {
                let v = z[k * p + d];
                out[i * p + d] += v;
                out[j * p + d] -= v;
            }
        }
    }

    /// Dense `pm × N` matrix, for tests and small problems.
    pub fn to_dense(&self) -> Vec<T> {
        let (rows, cols, p) = (self.blocks() * self.p, self.domain_dim(), self.p);
        let mut d = vec![T::zero(); rows * cols];
        for (k, &(i, j)) in self.graph.edges.iter().enumerate() {
            for c in 0..p {
                d[(k * p + c) * cols + i * p + c] = T::one();
                d[(k * p + c) * cols + j * p + c] = -T::one();
            }
        }
        d
    }

    /// `λ_min(D Dᵀ)`; zero when `D` is not surjective (the edge set has a cycle).
    ///
    /// Path graphs use `2(1 - cos(π/n))`; other forests are solved on the `m × m`
    /// edge Gram matrix, by Jacobi for small `m` and inverse iteration otherwise.
    pub fn sigma_min_ddt(&self) -> T {
        let g = self.graph;
        let m = g.m();
        if m == 0 {
            return T::zero();
        }
        if g.is_path() {
            let n = T::from_usize_lossy(g.n());
            return T::c(2.0) * (T::one() - (T::c(std::f64::consts::PI) / n).cos());
        }
        if !g.is_forest() {
            return T::zero();
        }
        let gram = edge_gram(g);
        if m <= 64 {
            return sym_eigenvalues(&gram, m)[0].max(T::zero());
        }
        inverse_iteration_min(&gram, m).unwrap_or(T::zero())
    }
}

/// `B Bᵀ` for the unit-block incidence `B` (entries of `D Dᵀ` with `p = 1`).
fn edge_gram<T: Scalar>(g: &WeightedGraph<T>) -> Vec<T> {
    let m = g.m();
    let mut gram = vec![T::zero(); m * m];
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        for (f, &(k, l)) in g.edges().iter().enumerate() {
            let mut v = 0i32;
            if i == k {
                v += 1;
            }
            if i == l {
                v -= 1;
            }
            if j == k {
                v -= 1;
            }
            if j == l {
                v += 1;
            }
            gram[e * m + f] = T::c(v as f64);
        }
    }
    gram
}

fn inverse_iteration_min<T: Scalar>(a: &[T], m: usize) -> Result<T> {
    let chol = BandedCholesky::factor(m, m - 1, |i, j| a[i * m + j])?;
    // deterministic start vector with components in every direction
    let mut v: Vec<T> = (0..m).map(|i| T::one() + T::c(0.37) * T::from_usize_lossy(i % 7)).collect();
    let mut lambda = T::infinity();
    for _ in 0..5000 {
        let nrm = crate::scalar::norm2(&v);
        v.iter_mut().for_each(|x| *x /= nrm);
        let av: Vec<T> = (0..m)
            .map(|i| (0..m).map(|j| a[i * m + j] * v[j]).sum())
            .collect();
        let rq = crate::scalar::dot(&v, &av);
        if (lambda - rq).abs() <= T::c(1e-14) * rq.abs().max(T::epsilon()) {
            return Ok(rq);
        }
        lambda = rq;
        chol.solve_in_place(&mut v);
    }
    Ok(lambda)
}

/// Disjoint-set forest over `0..n`.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_uniform_three() {
        let g = WeightedGraph::<f64>::complete(3, WeightScheme::Uniform).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(g.weights(), &[1.0, 1.0, 1.0]);
        assert_eq!(WeightedGraph::<f64>::complete(1, WeightScheme::Uniform).unwrap().m(), 0);
    }

    #[test]
    fn complete_gaussian_entry() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]];
        let g = WeightedGraph::complete(4, WeightScheme::Gaussian { points: &pts, alpha: 0.5 }).unwrap();
        // ‖a_1 - a_2‖² = 4 + 9 = 13 -> exp(-6.5)
        assert!((g.weight(1, 2) - (-6.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn knn_collinear() {
        let pts = vec![vec![0.0], vec![1.0], vec![10.0]];
        let g = WeightedGraph::knn_gaussian(&pts, 1, 0.5).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        let full = WeightedGraph::knn_gaussian(&pts, 2, 0.5).unwrap();
        assert_eq!(full.m(), 3);
        let big = WeightedGraph::knn_gaussian(&pts, 10, 0.5).unwrap();
        assert_eq!(big, full);
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        // node 1 sits at equal distance from nodes 0 and 2; nodes 0 and 2 have
        // closer partners of their own
        let pts = vec![
            vec![-1.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.5],
            vec![1.0, 0.5],
        ];
        let g = WeightedGraph::knn_gaussian(&pts, 1, 1.0).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 3), (2, 4)]);
    }

    #[test]
    fn path_shapes() {
        assert_eq!(WeightedGraph::<f64>::path(3).unwrap().edges(), &[(0, 1), (1, 2)]);
        assert_eq!(WeightedGraph::<f64>::path(2).unwrap().m(), 1);
        assert_eq!(WeightedGraph::<f64>::path(1000).unwrap().m(), 999);
        assert!(WeightedGraph::<f64>::path(1).is_err());
    }

    #[test]
    fn apply_d_on_path() {
        let g = WeightedGraph::<f64>::path(3).unwrap();
        let d = g.difference_operator(1);
        let x = Centroids::from_flat(3, 1, vec![1.0, 4.0, 9.0]).unwrap();
        assert_eq!(d.apply(&x).unwrap().as_slice(), &[-3.0, -5.0]);
        let c = Centroids::from_flat(3, 1, vec![2.0; 3]).unwrap();
        assert!(d.apply(&c).unwrap().as_slice().iter().all(|&v| v == 0.0));
        let bad = Centroids::from_flat(2, 1, vec![0.0; 2]).unwrap();
        assert!(matches!(d.apply(&bad), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sigma_small_cases() {
        let g = WeightedGraph::<f64>::path(2).unwrap();
        assert!((g.difference_operator(1).sigma_min_ddt() - 2.0).abs() < 1e-15);
        let g = WeightedGraph::<f64>::path(1000).unwrap();
        let s = g.difference_operator(1).sigma_min_ddt();
        assert!((s - 9.87e-6).abs() < 0.01e-6, "{s}");
        let k3 = WeightedGraph::<f64>::complete(3, WeightScheme::Uniform).unwrap();
        assert_eq!(k3.difference_operator(1).sigma_min_ddt(), 0.0);
    }

    #[test]
    fn edge_list_round_trip_and_validation() {
        let g = WeightedGraph::<f64>::from_edge_list("# demo\n1 0 0.5\n1 2 0.25\n", None).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        let back = WeightedGraph::<f64>::from_edge_list(&g.to_edge_list(), Some(3)).unwrap();
        assert_eq!(g, back);
        assert!(WeightedGraph::<f64>::from_edge_list("0 0 1", None).is_err());
        assert!(WeightedGraph::<f64>::from_edge_list("0 1 1\n1 0 2", None).is_err());
        assert!(WeightedGraph::<f64>::from_edge_list("0 1 -1", None).is_err());
        assert!(WeightedGraph::<f64>::from_edge_list("0 1", None).is_err());
    }

    #[test]
    fn star_forest_sigma_is_one() {
        // star K_{1,3}: Laplacian spectrum {0, 1, 1, 4}
        let g = WeightedGraph::<f64>::new(4, [(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        assert!((g.difference_operator(2).sigma_min_ddt() - 1.0).abs() < 1e-12);
    }
}
