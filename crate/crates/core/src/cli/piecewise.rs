//! Piecewise-constant signal recovery: trimmed lasso with a fixed jump budget against a
//! Gaussian-weighted Network Lasso over a grid of `γ`.

use serde::Serialize;

use crate::centroids::Centroids;
use crate::datasets::SignalInstance;
use crate::error::{Error, Result};
use crate::graph::{gaussian_weight, WeightedGraph};
use crate::losses::LossSpec;
use crate::path::{extract_partition, MERGE_TOL};
use crate::scalar::dist2;
use crate::solver::{solve_nl, solve_ntl, RhoSchedule, SolverConfig, SolverInit, StopReason};

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSettings {
    pub k: usize,
    /// Defaults to `3 n max_i |x̂_i| · 1.001`.
    pub gamma: Option<f64>,
    pub rho: f64,
    /// ρ multiplied by 10 every 100 iterations up to `2/(0.99σ)`.
    pub rho_schedule: bool,
    pub ntl_max_iters: usize,
    pub nl_gammas: Vec<f64>,
    pub nl_rho: f64,
    pub nl_max_iters: usize,
    /// `α` in the NL edge weights `exp(-α (x̂_i - x̂_{i+1})²)`.
    pub nl_alpha: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub merge_tol: f64,
}

impl Default for PiecewiseSettings {
    fn default() -> Self {
        Self {
            k: 5,
            gamma: None,
            rho: 1.0,
            rho_schedule: true,
            ntl_max_iters: 5000,
            nl_gammas: geometric(1e-3, 1.2, 100),
            nl_rho: 1.0,
            nl_max_iters: 3000,
            nl_alpha: 0.5,
            // jump detection at the merge tolerance needs a tighter stop test than 1e-5
            eps_abs: 1e-9,
            eps_rel: 1e-9,
            merge_tol: MERGE_TOL,
        }
    }
}

/// `start · ratio^t` for `t = 0..count`.
pub fn geometric(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|t| start * ratio.powi(t as i32)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub gamma: f64,
    pub error: f64,
    pub jumps: Vec<usize>,
    pub iterations: usize,
    pub stop: StopReason,
}

#[derive(Debug, Clone, Serialize)]
pub struct PiecewiseReport {
    pub n: usize,
    pub k: usize,
    pub true_jumps: Vec<usize>,
    pub ntl: FitSummary,
    pub ntl_jumps_exact: bool,
    /// Smallest `‖x - x°‖` over the grid (the grid stops once the fit is constant).
    pub nl_best_quality: FitSummary,
    /// Smallest `γ` whose fit has at most `K` jumps.
    pub nl_best_cardinality: Option<FitSummary>,
    pub ntl_beats_nl: bool,
    #[serde(skip)]
    pub ntl_signal: Vec<f64>,
    #[serde(skip)]
    pub nl_best_signal: Vec<f64>,
}

fn jumps(x: &Centroids<f64>, graph: &WeightedGraph<f64>, tol: f64) -> Result<Vec<usize>> {
    let part = extract_partition(x, graph, tol)?;
    let l = part.labels();
    Ok((0..x.n().saturating_sub(1)).filter(|&i| l[i] != l[i + 1]).collect())
}

pub fn piecewise_experiment(signal: &SignalInstance<f64>, s: &PiecewiseSettings) -> Result<PiecewiseReport> {
    let n = signal.noisy.len();
    if n < 2 {
        return Err(Error::param("signal needs at least two samples"));
    }
    if s.nl_gammas.is_empty() {
        return Err(Error::param("empty NL gamma grid"));
    }
    let rows: Vec<Vec<f64>> = signal.noisy.iter().map(|&v| vec![v]).collect();
    let losses = LossSpec::squared_distance(&rows)?;
    let path = WeightedGraph::path(n)?;
    let init = SolverInit::from_x(Centroids::from_rows(&rows)?);
    let error = |x: &Centroids<f64>| dist2(x.as_slice(), &signal.original);

    let max_abs = signal.noisy.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let gamma = s.gamma.unwrap_or(3.0 * n as f64 * max_abs * 1.001);
    let mut cfg = SolverConfig::ntl(gamma, s.k)
        .with_rho(s.rho)
        .with_max_iters(s.ntl_max_iters)
        .with_tolerances(s.eps_abs, s.eps_rel);
    if s.rho_schedule {
        let sigma = path.difference_operator(1).sigma_min_ddt();
        cfg = cfg.with_rho_schedule(RhoSchedule::tenfold(sigma));
    }
    let (state, stop) = solve_ntl(&losses, &path, &cfg, &init)?;
    let ntl_jumps = jumps(&state.x, &path, s.merge_tol)?;
    let ntl = FitSummary { gamma, error: error(&state.x), jumps: ntl_jumps, iterations: state.iter, stop };

    let weighted = WeightedGraph::new(
        n,
        (0..n - 1).map(|i| (i, i + 1, gaussian_weight(&rows[i], &rows[i + 1], s.nl_alpha))),
    )?;
    let mut best: Option<(FitSummary, Vec<f64>)> = None;
    let mut cardinality = None;
    let mut start = init;
    for &g in &s.nl_gammas {
        let cfg = SolverConfig::nl(g)
            .with_rho(s.nl_rho)
            .with_max_iters(s.nl_max_iters)
            .with_tolerances(s.eps_abs, s.eps_rel);
        let (st, stop) = solve_nl(&losses, &weighted, &cfg, &start)?;
        let fit = FitSummary {
            gamma: g,
            error: error(&st.x),
            jumps: jumps(&st.x, &weighted, s.merge_tol)?,
            iterations: st.iter,
            stop,
        };
        if cardinality.is_none() && fit.jumps.len() <= s.k {
            cardinality = Some(fit.clone());
        }
        let merged = fit.jumps.is_empty();
        if best.as_ref().is_none_or(|b| fit.error < b.0.error) {
            best = Some((fit, st.x.as_slice().to_vec()));
        }
        if merged {
            break;
        }
        start = SolverInit::from_x(st.x);
    }
    let (nl_best_quality, nl_best_signal) = best.expect("non-empty grid");
    Ok(PiecewiseReport {
        n,
        k: s.k,
        true_jumps: signal.jumps.clone(),
        ntl_jumps_exact: ntl.jumps == signal.jumps,
        ntl_beats_nl: ntl.error <= nl_best_quality.error,
        ntl_signal: state.x.as_slice().to_vec(),
        ntl,
        nl_best_quality,
        nl_best_cardinality: cardinality,
        nl_best_signal,
    })
}
