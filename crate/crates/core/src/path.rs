//! Partitions, cluster paths over `K` or `γ`, partition relations and the adjusted Rand index.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use serde::Serialize;

use crate::centroids::Centroids;
use crate::error::{check_dim, Error, Result};
use crate::graph::{UnionFind, WeightedGraph};
use crate::losses::LossSpec;
use crate::scalar::{dist2, Scalar};
use crate::solver::{solve_nl, solve_ntl, SolverConfig, SolverInit, StopReason};

/// Default relative merge tolerance.
pub const MERGE_TOL: f64 = 1e-6;

/// Cluster labels `0..N` for `n` nodes; every id in `0..N` is used.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Partition {
    labels: Vec<usize>,
    #[serde(rename = "clusters")]
    count: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let count = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
        let mut seen = vec![false; count];
        labels.iter().for_each(|&l| seen[l] = true);
        if let Some(k) = seen.iter().position(|&s| !s) {
            return Err(Error::EmptyCluster(k));
        }
        Ok(Self { labels, count })
    }

    /// Relabels arbitrary ids densely in order of first appearance.
    pub fn from_raw<L: Eq + Hash + Clone>(raw: &[L]) -> Self {
        let mut map = HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(l.clone()).or_insert(next)
            })
            .collect();
        Self { labels, count: map.len() }
    }

    pub fn single(n: usize) -> Self {
        Self { labels: vec![0; n], count: usize::from(n > 0) }
    }

    pub fn singletons(n: usize) -> Self {
        Self { labels: (0..n).collect(), count: n }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.count
    }

    /// Members of each cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Same set partition, ignoring the label names.
    pub fn same_as(&self, other: &Partition) -> bool {
        self.n() == other.n() && Partition::from_raw(&self.labels).labels == Partition::from_raw(&other.labels).labels
    }
}

fn merge_scale<T: Scalar>(x: &Centroids<T>, merge_tol: T) -> T {
    merge_tol.max(T::zero()) * (T::one() + x.max_row_norm())
}

/// Connected components of the edges with `‖x_i - x_j‖ <= tol (1 + max_i ‖x_i‖)`,
/// labeled in order of first appearance.
pub fn extract_partition<T: Scalar>(x: &Centroids<T>, graph: &WeightedGraph<T>, merge_tol: T) -> Result<Partition> {
    check_dim(graph.n(), x.n())?;
    let thr = merge_scale(x, merge_tol);
    let mut uf = UnionFind::new(x.n());
    for &(i, j) in graph.edges() {
        if dist2(x.row(i), x.row(j)) <= thr {
            uf.union(i, j);
        }
    }
    let roots: Vec<usize> = (0..x.n()).map(|i| uf.find(i)).collect();
    Ok(Partition::from_raw(&roots))
}

/// True when every centroid lies within the merge tolerance of every other.
pub fn all_merged<T: Scalar>(x: &Centroids<T>, merge_tol: T) -> bool {
    let thr = merge_scale(x, merge_tol);
    let n = x.n();
    (0..n).all(|i| ((i + 1)..n).all(|j| dist2(x.row(i), x.row(j)) <= thr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    Perfect,
    NontrivialCoarsening,
    TrivialCoarsening,
    Other,
}

/// How an estimated partition relates to the true one.
pub fn partition_relation(p_hat: &Partition, p_true: &Partition) -> Result<Relation> {
    check_dim(p_true.n(), p_hat.n())?;
    if p_hat.same_as(p_true) {
        return Ok(Relation::Perfect);
    }
    // coarsening: each true cluster sits inside a single estimated cluster
    let mut owner = vec![None; p_true.num_clusters()];
    for (&t, &h) in p_true.labels().iter().zip(p_hat.labels()) {
        match owner[t] {
            None => owner[t] = Some(h),
            Some(o) if o != h => return Ok(Relation::Other),
            _ => {}
        }
    }
    if p_hat.num_clusters() <= 1 {
        Ok(Relation::TrivialCoarsening)
    } else {
        Ok(Relation::NontrivialCoarsening)
    }
}

fn choose2(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Adjusted Rand index from the contingency table. Returns 1 when both partitions
/// are the same trivial partition (the chance-corrected ratio is 0/0).
pub fn adjusted_rand_index(p1: &Partition, p2: &Partition) -> Result<f64> {
    check_dim(p1.n(), p2.n())?;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    for (&a, &b) in p1.labels().iter().zip(p2.labels()) {
        *table.entry((a, b)).or_default() += 1;
    }
    let mut rows = vec![0usize; p1.num_clusters()];
    let mut cols = vec![0usize; p2.num_clusters()];
    for (&(a, b), &c) in &table {
        rows[a] += c;
        cols[b] += c;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let total = choose2(p1.n());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Path parameter: a cardinality budget or a penalty weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PathParameter<T> {
    K(usize),
    Gamma(T),
}

#[derive(Debug, Clone, Serialize)]
pub struct PathStep<T: Scalar> {
    pub parameter: PathParameter<T>,
    #[serde(skip)]
    pub x: Centroids<T>,
    pub partition: Partition,
    pub objective: T,
    pub iterations: usize,
    pub stop: StopReason,
    pub primal_residual: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathResult<T: Scalar> {
    /// "k" or "gamma".
    pub kind: &'static str,
    pub merge_tol: T,
    pub steps: Vec<PathStep<T>>,
    /// The path ended before its schedule because every centroid merged.
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions<T> {
    pub merge_tol: T,
    /// γ-path only: start each step from the previous centroids.
    pub warm_start: bool,
    /// γ-path only: stop once all centroids coincide.
    pub stop_on_merge: bool,
}

impl<T: Scalar> Default for PathOptions<T> {
    fn default() -> Self {
        Self { merge_tol: T::c(MERGE_TOL), warm_start: true, stop_on_merge: true }
    }
}

/// Trimmed-lasso cluster path: for each `K_t` the solver starts at `(x^{t-1}, y = 0)`.
pub fn k_path<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    config: &SolverConfig<T>,
    k_sequence: &[usize],
    init: &SolverInit<T>,
    options: &PathOptions<T>,
) -> Result<PathResult<T>> {
    if k_sequence.is_empty() {
        return Err(Error::param("empty K sequence"));
    }
    if k_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("K sequence must be strictly decreasing"));
    }
    if let Some(&k) = k_sequence.iter().find(|&&k| k > graph.m()) {
        return Err(Error::param(format!("K = {k} exceeds the edge count {}", graph.m())));
    }
    let mut steps = Vec::with_capacity(k_sequence.len());
    let mut start = init.clone();
    for &k in k_sequence {
        let cfg = SolverConfig { k, ..config.clone() };
        let (state, stop) = solve_ntl(losses, graph, &cfg, &start)?;
        steps.push(make_step(PathParameter::K(k), &state, stop, graph, options.merge_tol)?);
        start = SolverInit::from_x(state.x);
    }
    Ok(PathResult { kind: "k", merge_tol: options.merge_tol, steps, stopped_early: false })
}

/// Network Lasso path over an increasing `γ` schedule.
pub fn gamma_path<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    config: &SolverConfig<T>,
    gamma_sequence: &[T],
    init: &SolverInit<T>,
    options: &PathOptions<T>,
) -> Result<PathResult<T>> {
    if gamma_sequence.is_empty() {
        return Err(Error::param("empty gamma sequence"));
    }
    if gamma_sequence.iter().any(|&g| !(g > T::zero()) || !g.is_finite()) {
        return Err(Error::param("gamma values must be positive and finite"));
    }
    if gamma_sequence.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("gamma sequence must be strictly increasing"));
    }
    let mut steps = Vec::with_capacity(gamma_sequence.len());
    let mut start = init.clone();
    let mut stopped_early = false;
    for (t, &gamma) in gamma_sequence.iter().enumerate() {
        let cfg = SolverConfig { gamma, ..config.clone() };
        let (state, stop) = solve_nl(losses, graph, &cfg, &start)?;
        let merged = all_merged(&state.x, options.merge_tol);
        steps.push(make_step(PathParameter::Gamma(gamma), &state, stop, graph, options.merge_tol)?);
        if options.warm_start {
            start = SolverInit::from_x(state.x);
        }
        if options.stop_on_merge && merged {
            stopped_early = t + 1 < gamma_sequence.len();
            break;
        }
    }
    Ok(PathResult { kind: "gamma", merge_tol: options.merge_tol, steps, stopped_early })
}

fn make_step<T: Scalar>(
    parameter: PathParameter<T>,
    state: &crate::solver::SolverState<T>,
    stop: StopReason,
    graph: &WeightedGraph<T>,
    merge_tol: T,
) -> Result<PathStep<T>> {
    let last = state.history.last();
    Ok(PathStep {
        parameter,
        partition: extract_partition(&state.x, graph, merge_tol)?,
        objective: last.map_or(T::nan(), |r| r.objective),
        iterations: state.iter,
        stop,
        primal_residual: last.map_or(T::zero(), |r| r.primal_residual),
        x: state.x.clone(),
    })
}

/// Centroids at the middle of the steps that still have an unmerged pair.
pub fn midpoint_init<T: Scalar>(path: &PathResult<T>) -> Result<Centroids<T>> {
    let unmerged: Vec<&PathStep<T>> = path
        .steps
        .iter()
        .filter(|s| !all_merged(&s.x, path.merge_tol))
        .collect();
    if unmerged.is_empty() {
        return Err(Error::NoUnmergedStep);
    }
    Ok(unmerged[unmerged.len() / 2].x.clone())
}

impl<T: Scalar> PathResult<T> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// One row per step: `step,parameter,x{i}_{d}...` with full precision.
    pub fn write_centroids_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let (n, p) = self.steps.first().map_or((0, 0), |s| (s.x.n(), s.x.p()));
        let mut header = vec!["step".to_string(), "parameter".to_string()];
        for i in 0..n {
            for d in 0..p {
                header.push(format!("x{i}_{d}"));
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for (t, s) in self.steps.iter().enumerate() {
            let param = match s.parameter {
                PathParameter::K(k) => k.to_string(),
                PathParameter::Gamma(g) => format!("{:?}", g.as_f64()),
            };
            let mut row = vec![t.to_string(), param];
            row.extend(s.x.as_slice().iter().map(|v| format!("{:?}", v.as_f64())));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
