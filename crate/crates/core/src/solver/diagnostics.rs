use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::centroids::Centroids;
use crate::error::{check_dim, Error, Result};
use crate::graph::WeightedGraph;
use crate::losses::LossSpec;
use crate::penalty::{directional_derivative, BlockVector};
use crate::scalar::{dot, norm2, serialize_extended, Scalar};

use super::admm::{IterRecord, PenaltyKind};
use super::config::{SolverConfig, XUpdate};

/// Constants of the convergence theory for one (losses, graph, config) triple.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceParams<T: Scalar> {
    /// `λ_min(D Dᵀ)`.
    pub sigma: T,
    pub l1: T,
    pub l2: T,
    pub alpha1: T,
    pub alpha2: T,
    /// `r*` minimizing the step-size bound.
    pub r: T,
    /// `ζ = L` (smoothness of `f`).
    pub zeta: T,
    /// `inf {f - ‖∇f‖²/(2ζ)}` when known in closed form.
    pub f_inf: Option<T>,
    pub rho: T,
    /// `min_r 2/(σ(α1+α2)) (L1²/r + L2²/(1-r))`.
    #[serde(serialize_with = "serialize_extended")]
    pub rho_min: T,
    /// Smallest `ρ` for which some `r` satisfies both the step-size bound and `ρ > L/(σr)`.
    #[serde(serialize_with = "serialize_extended")]
    pub rho_min_bounded: T,
    pub surjective: bool,
    pub step_size_ok: bool,
    pub bounded_ok: bool,
    /// "ok", "violated" or "inapplicable".
    pub status: &'static str,
}

impl<T: Scalar> ConvergenceParams<T> {
    /// Step-size bound `2/(σ(α1+α2)) (L1²/r + L2²/(1-r))` at a given `r ∈ (0, 1)`.
    pub fn rho_bound(&self, r: T) -> T {
        if !(self.sigma > T::zero()) {
            return T::infinity();
        }
        let two = T::c(2.0);
        two / (self.sigma * (self.alpha1 + self.alpha2))
            * (self.l1 * self.l1 / r + self.l2 * self.l2 / (T::one() - r))
    }

    /// `L/(σr)`, the boundedness requirement.
    pub fn boundedness_bound(&self, r: T) -> T {
        if !(self.sigma > T::zero()) {
            return T::infinity();
        }
        self.zeta / (self.sigma * r)
    }
}

/// Reports the theory constants for the x-update the config selects: `φ = 0`
/// (exact) gives `L1 = L, α1 = α, L2 = α2 = 0`; the linearized update gives
/// `L1 = L2 = α1 = L, α2 = 0`.
pub fn validate_convergence_params<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    config: &SolverConfig<T>,
) -> ConvergenceParams<T> {
    let sigma = graph.difference_operator(losses.p()).sigma_min_ddt();
    let lip = config.lipschitz.unwrap_or_else(|| losses.max_smoothness());
    let alpha = losses.min_strong_convexity();
    let linearized = match config.x_update {
        XUpdate::Linearized => true,
        XUpdate::Exact => false,
        XUpdate::Auto => !losses.is_quadratic(),
    };
    let (l1, l2, alpha1, alpha2) = if linearized {
        (lip, lip, lip, T::zero())
    } else {
        (lip, T::zero(), alpha, T::zero())
    };
    let zeta = losses.max_smoothness();
    let f_inf = if losses.is_quadratic() {
        losses.minimizers().ok().and_then(|x| losses.total(&x).ok())
    } else {
        None
    };
    let surjective = sigma > T::zero();
    let a_sum = alpha1 + alpha2;
    let mut params = ConvergenceParams {
        sigma,
        l1,
        l2,
        alpha1,
        alpha2,
        r: if l1 + l2 > T::zero() { l1 / (l1 + l2) } else { T::c(0.5) },
        zeta,
        f_inf,
        rho: config.rho,
        rho_min: T::infinity(),
        rho_min_bounded: T::infinity(),
        surjective,
        step_size_ok: false,
        bounded_ok: false,
        status: "inapplicable",
    };
    if !surjective || !(a_sum > T::zero()) {
        return params;
    }
    let two = T::c(2.0);
    params.rho_min = two * (l1 + l2) * (l1 + l2) / (sigma * a_sum);
    // r* = 1 is outside (0, 1) when L2 = 0; the infimum is then approached, not attained
    params.step_size_ok = config.rho > params.rho_min;
    let grid = 10_000;
    let mut best = T::infinity();
    for t in 1..grid {
        let r = T::from_usize_lossy(t) / T::from_usize_lossy(grid);
        let need = params.rho_bound(r).max(params.boundedness_bound(r));
        if need < best {
            best = need;
        }
        if config.rho > need {
            params.bounded_ok = true;
        }
    }
    params.rho_min_bounded = best;
    params.status = if params.step_size_ok { "ok" } else { "violated" };
    params
}

/// Result of probing `∇f(x)ᵀv + γ dP(Dx; Dv)` over a set of unit directions.
#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub directions: usize,
    pub min_derivative: f64,
    pub argmin_direction: String,
    /// Largest `|finite difference - analytic|` when a step `η` was supplied.
    pub max_fd_gap: Option<f64>,
    pub tolerance: f64,
    pub stationary: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct StationarityOptions<T> {
    pub random_directions: usize,
    pub seed: u64,
    /// Blocks of `D x` with norm at most this are treated as exactly merged.
    pub zero_tol: T,
    /// Tie tolerance for the K-th largest norm.
    pub tie_tol: T,
    pub eta: Option<T>,
    pub tolerance: T,
}

impl<T: Scalar> Default for StationarityOptions<T> {
    fn default() -> Self {
        Self {
            random_directions: 64,
            seed: 0,
            zero_tol: T::zero(),
            tie_tol: T::zero(),
            eta: None,
            tolerance: T::c(1e-6),
        }
    }
}

/// Samples random, coordinate, edge-aligned and `-∇f` directions and reports the
/// smallest one-sided directional derivative of the objective at `x`.
pub fn stationarity_check<T: Scalar>(
    x: &Centroids<T>,
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    gamma: T,
    penalty: PenaltyKind,
    opts: &StationarityOptions<T>,
) -> Result<StationarityReport> {
    check_dim(graph.n(), x.n())?;
    check_dim(losses.p(), x.p())?;
    let (n, p) = (x.n(), x.p());
    let op = graph.difference_operator(p);
    let mut z = op.apply(x)?;
    for k in 0..z.m() {
        if norm2(z.block(k)) <= opts.zero_tol {
            z.block_mut(k).iter_mut().for_each(|v| *v = T::zero());
        }
    }
    let grad = losses.total_gradient(x)?;

    let mut dirs: Vec<(String, Vec<T>)> = Vec::new();
    for i in 0..n {
        for c in 0..p {
            for s in [T::one(), -T::one()] {
                let mut v = vec![T::zero(); n * p];
                v[i * p + c] = s;
                dirs.push((format!("coord({i},{c},{s})"), v));
            }
        }
    }
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let blk = z.block(e);
        let nb = norm2(blk);
        let u: Vec<T> = if nb > T::zero() {
            blk.iter().map(|&v| v / nb).collect()
        } else {
            let mut u = vec![T::zero(); p];
            u[0] = T::one();
            u
        };
        for s in [T::one(), -T::one()] {
            let mut v = vec![T::zero(); n * p];
            for c in 0..p {
                v[i * p + c] = s * u[c];
                v[j * p + c] = -s * u[c];
            }
            dirs.push((format!("edge({i},{j},{s})"), v));
        }
    }
    if norm2(grad.as_slice()) > T::zero() {
        dirs.push(("-grad".to_string(), grad.as_slice().iter().map(|&g| -g).collect()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for r in 0..opts.random_directions {
        let v: Vec<T> = (0..n * p).map(|_| T::c(rng.sample::<f64, _>(StandardNormal))).collect();
        dirs.push((format!("random({r})"), v));
    }

    let objective = |xs: &[T]| -> T {
        let xc = Centroids::from_flat(n, p, xs.to_vec()).expect("shape");
        let f = losses.total(&xc).expect("shape");
        let dz = op.apply(&xc).expect("shape");
        f + gamma * penalty_of(&dz, graph, penalty)
    };

    let mut min_d = f64::INFINITY;
    let mut arg = String::new();
    let mut fd_gap: Option<f64> = None;
    let base = opts.eta.map(|_| objective(x.as_slice()));
    for (label, mut v) in dirs {
        let nv = norm2(&v);
        if !(nv > T::zero()) {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        let mut dv = vec![T::zero(); graph.m() * p];
        op.apply_slice(&v, &mut dv);
        let dvb = BlockVector::from_flat(graph.m(), p, dv)?;
        let pen = match penalty {
            PenaltyKind::Trimmed { k } => directional_derivative(&z, &dvb, k, opts.tie_tol)?,
            PenaltyKind::Weighted => weighted_derivative(&z, &dvb, graph.weights()),
        };
        let d = dot(grad.as_slice(), &v) + gamma * pen;
        if let (Some(eta), Some(f0)) = (opts.eta, base) {
            let moved: Vec<T> = x.as_slice().iter().zip(&v).map(|(&a, &b)| a + eta * b).collect();
            let fd = (objective(&moved) - f0) / eta;
            let gap = (fd - d).abs().as_f64();
            fd_gap = Some(fd_gap.map_or(gap, |g: f64| g.max(gap)));
        }
        if d.as_f64() < min_d {
            min_d = d.as_f64();
            arg = label;
        }
    }
    let tol = opts.tolerance.as_f64();
    Ok(StationarityReport {
        directions: 2 * n * p + 2 * graph.m() + opts.random_directions,
        min_derivative: min_d,
        argmin_direction: arg,
        max_fd_gap: fd_gap,
        tolerance: tol,
        stationary: min_d >= -tol,
    })
}

fn penalty_of<T: Scalar>(z: &BlockVector<T>, graph: &WeightedGraph<T>, penalty: PenaltyKind) -> T {
    match penalty {
        PenaltyKind::Trimmed { k } => crate::penalty::trimmed_norm(z, k),
        PenaltyKind::Weighted => z.block_norms().iter().zip(graph.weights()).map(|(&a, &w)| a * w).sum(),
    }
}

fn weighted_derivative<T: Scalar>(z: &BlockVector<T>, v: &BlockVector<T>, w: &[T]) -> T {
    (0..z.m())
        .map(|k| {
            let (zb, vb) = (z.block(k), v.block(k));
            let nz = norm2(zb);
            let slope = if nz > T::zero() { dot(zb, vb) / nz } else { norm2(vb) };
            w[k] * slope
        })
        .sum()
}

/// Edge subgradients certifying Network Lasso optimality at `x`.
#[derive(Debug, Clone, Serialize)]
pub struct NlCertificate {
    /// `max_i ‖∇f_i + γ (Dᵀ(w∘g))_i‖ / (1 + ‖∇f_i‖)`.
    pub max_scaled_residual: f64,
    pub max_subgradient_norm: f64,
    pub merged_edges: usize,
    pub iterations: usize,
    pub tolerance: f64,
    pub certified: bool,
}

/// Searches for `g_e` with `g_e = (x_i - x_j)/‖x_i - x_j‖` on separated edges and
/// `‖g_e‖ <= 1` on merged ones such that every node residual
/// `‖∇f_i(x_i) + γ Σ_e ±w_e g_e‖` is at most `tolerance (1 + ‖∇f_i‖)`.
///
/// An edge counts as merged when `‖x_i - x_j‖ <= merge_tol (1 + max ‖x_k‖)`. The free
/// subgradients are fitted by projected accelerated gradient on the squared residual,
/// starting from `-y_e / (γ w_e)` when a dual is given.
pub fn nl_certificate<T: Scalar>(
    x: &Centroids<T>,
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    gamma: T,
    y: Option<&BlockVector<T>>,
    merge_tol: T,
    tolerance: T,
) -> Result<NlCertificate> {
    check_dim(graph.n(), x.n())?;
    let (n, p, m) = (x.n(), x.p(), graph.m());
    let grad = losses.total_gradient(x)?;
    let op = graph.difference_operator(p);
    let dx = op.apply(x)?;
    let scale = merge_tol * (T::one() + x.max_row_norm());
    let w = graph.weights();

    let mut g = vec![T::zero(); m * p];
    let mut free = vec![false; m];
    for e in 0..m {
        let blk = dx.block(e);
        let nb = norm2(blk);
        if nb > scale {
            for c in 0..p {
                g[e * p + c] = blk[c] / nb;
            }
        } else {
            free[e] = true;
            if let Some(y) = y {
                check_dim(m, y.m())?;
                if gamma * w[e] > T::zero() {
                    for c in 0..p {
                        g[e * p + c] = -y.block(e)[c] / (gamma * w[e]);
                    }
                }
            }
            project_ball(&mut g[e * p..(e + 1) * p]);
        }
    }

    let grad_norms: Vec<T> = grad.rows().map(norm2).collect();
    let residual = |g: &[T]| -> Vec<T> {
        let wg: Vec<T> = (0..m * p).map(|k| gamma * w[k / p.max(1)] * g[k]).collect();
        let mut r = vec![T::zero(); n * p];
        op.apply_transpose_slice(&wg, &mut r);
        r.iter_mut().zip(grad.as_slice()).for_each(|(a, &b)| *a += b);
        r
    };
    let worst = |r: &[T]| -> T {
        (0..n)
            .map(|i| norm2(&r[i * p..(i + 1) * p]) / (T::one() + grad_norms[i]))
            .fold(T::zero(), T::max)
    };

    let mut r = residual(&g);
    let mut iterations = 0;
    let n_free = free.iter().filter(|&&f| f).count();
    if n_free > 0 && worst(&r) > tolerance && gamma > T::zero() {
        let wmax = w.iter().copied().fold(T::zero(), T::max);
        let mut deg = vec![0usize; n];
        for &(i, j) in graph.edges() {
            deg[i] += 1;
            deg[j] += 1;
        }
        let dmax = T::from_usize_lossy(deg.into_iter().max().unwrap_or(1));
        let lip = gamma * gamma * wmax * wmax * T::c(2.0) * dmax;
        let step = T::one() / lip;
        let mut prev = g.clone();
        let mut momentum = g.clone();
        let mut t = T::one();
        for it in 0..20_000 {
            iterations = it + 1;
            let rm = residual(&momentum);
            let mut dr = vec![T::zero(); m * p];
            op.apply_slice(&rm, &mut dr);
            let mut next = momentum.clone();
            for e in (0..m).filter(|&e| free[e]) {
                let blk = &mut next[e * p..(e + 1) * p];
                for c in 0..p {
                    blk[c] -= step * gamma * w[e] * dr[e * p + c];
                }
                project_ball(blk);
            }
            let t_next = (T::one() + (T::one() + T::c(4.0) * t * t).sqrt()) / T::c(2.0);
            let beta = (t - T::one()) / t_next;
            for k in 0..m * p {
                momentum[k] = next[k] + beta * (next[k] - prev[k]);
            }
            prev = next;
            t = t_next;
            if it % 20 == 0 {
                r = residual(&prev);
                if worst(&r) <= tolerance {
                    break;
                }
            }
        }
        g = prev;
        r = residual(&g);
    }
    let max_res = worst(&r);
    let max_g = (0..m).map(|e| norm2(&g[e * p..(e + 1) * p])).fold(T::zero(), T::max);
    Ok(NlCertificate {
        max_scaled_residual: max_res.as_f64(),
        max_subgradient_norm: max_g.as_f64(),
        merged_edges: n_free,
        iterations,
        tolerance: tolerance.as_f64(),
        certified: max_res <= tolerance && max_g <= T::one() + T::c(1e-6),
    })
}

fn project_ball<T: Scalar>(v: &mut [T]) {
    let nv = norm2(v);
    if nv > T::one() {
        v.iter_mut().for_each(|a| *a /= nv);
    }
}

/// Writes the iteration trace as CSV with columns
/// `iter,objective,augmented_lagrangian,primal_residual,x_change,rho`.
pub fn write_trace_csv<T: Scalar, W: Write>(history: &[IterRecord<T>], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(["iter", "objective", "augmented_lagrangian", "primal_residual", "x_change", "rho"])
        .map_err(io)?;
    for r in history {
        wtr.write_record([
            r.iter.to_string(),
            r.objective.as_f64().to_string(),
            r.augmented_lagrangian.as_f64().to_string(),
            r.primal_residual.as_f64().to_string(),
            r.x_change.as_f64().to_string(),
            r.rho.as_f64().to_string(),
        ])
        .map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightScheme;
    use crate::solver::{solve_nl, solve_ntl, SolverInit};

    fn line(values: &[f64]) -> LossSpec<f64> {
        LossSpec::squared_distance(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn path_graph_exact_bound() {
        let losses = line(&[0.0, 1.0, 2.0, 3.0]);
        let g = WeightedGraph::path(4).unwrap();
        let cfg = SolverConfig::ntl(1.0, 1);
        let cp = validate_convergence_params(&losses, &g, &cfg);
        let sigma = 2.0 * (1.0 - (std::f64::consts::PI / 4.0).cos());
        assert!((cp.sigma - sigma).abs() < 1e-15);
        assert_eq!((cp.l1, cp.l2, cp.alpha1, cp.alpha2), (1.0, 0.0, 1.0, 0.0));
        let hand = 2.0 * 1.0 / (sigma * 1.0 * 0.9);
        assert!((cp.rho_bound(0.9) - hand).abs() < 1e-12 * hand);
        assert_eq!(cp.status, "ok");
        assert_eq!(cp.f_inf, Some(0.0));
    }

    #[test]
    fn non_surjective_is_inapplicable() {
        let losses = line(&[0.0, 1.0, 2.0]);
        let g = WeightedGraph::complete(3, WeightScheme::Uniform).unwrap();
        let cp = validate_convergence_params(&losses, &g, &SolverConfig::ntl(1.0, 1));
        assert_eq!(cp.sigma, 0.0);
        assert_eq!(cp.status, "inapplicable");
    }

    #[test]
    fn linearized_constants() {
        let losses = LossSpec::<f64>::quadratic(1, vec![vec![2.0], vec![3.0]], vec![vec![0.0], vec![1.0]]).unwrap();
        let g = WeightedGraph::path(2).unwrap();
        let cfg = SolverConfig::ntl(1.0, 0).with_x_update(XUpdate::Linearized);
        let cp = validate_convergence_params(&losses, &g, &cfg);
        assert_eq!((cp.l1, cp.l2, cp.alpha1, cp.alpha2), (3.0, 3.0, 3.0, 0.0));
        // 2L/σ (1/r + 1/(1-r)) at r = 1/2
        assert!((cp.rho_bound(0.5) - 2.0 * 3.0 / 2.0 * 4.0).abs() < 1e-12);
        assert!((cp.rho_min - 2.0 * 36.0 / (2.0 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_minimizer_is_stationary() {
        let losses = line(&[0.0, 2.0, 5.0]);
        let g = WeightedGraph::path(3).unwrap();
        let x = losses.minimizers().unwrap();
        let rep = stationarity_check(&x, &losses, &g, 3.0, PenaltyKind::Trimmed { k: 2 }, &StationarityOptions::default()).unwrap();
        assert!(rep.stationary, "{rep:?}");
        assert!(rep.min_derivative >= -1e-9);
    }

    #[test]
    fn non_stationary_point_detected() {
        let losses = line(&[0.0, 2.0, 5.0]);
        let g = WeightedGraph::path(3).unwrap();
        let x = Centroids::from_flat(3, 1, vec![10.0, 2.0, 5.0]).unwrap();
        let rep = stationarity_check(&x, &losses, &g, 0.1, PenaltyKind::Trimmed { k: 2 }, &StationarityOptions::default()).unwrap();
        assert!(!rep.stationary);
        assert!(rep.min_derivative < -1.0);
    }

    #[test]
    fn ntl_output_is_stationary_and_matches_fd() {
        let losses = line(&[0.0, 0.2, 3.0, 3.1]);
        let g = WeightedGraph::path(4).unwrap();
        let cfg = SolverConfig::ntl(5.0, 1).with_tolerances(1e-12, 1e-12).with_max_iters(5000);
        let (st, _) = solve_ntl(&losses, &g, &cfg, &SolverInit::default()).unwrap();
        let opts = StationarityOptions { zero_tol: 1e-8, tolerance: 1e-6, ..Default::default() };
        let rep = stationarity_check(&st.x, &losses, &g, 5.0, PenaltyKind::Trimmed { k: 1 }, &opts).unwrap();
        assert!(rep.stationary, "{rep:?}");
        // finite differences at a generic point
        let x = Centroids::from_flat(4, 1, vec![0.3, -0.4, 2.0, 3.3]).unwrap();
        let opts = StationarityOptions { eta: Some(1e-7), ..Default::default() };
        let rep = stationarity_check(&x, &losses, &g, 5.0, PenaltyKind::Trimmed { k: 1 }, &opts).unwrap();
        assert!(rep.max_fd_gap.unwrap() < 1e-5, "{rep:?}");
    }

    #[test]
    fn certificate_for_nl_solution() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![0.3, 0.1], vec![4.0, 4.0], vec![4.2, 3.9], vec![2.0, 2.1]];
        let losses = LossSpec::squared_distance(&pts).unwrap();
        let g = WeightedGraph::complete(5, WeightScheme::Uniform).unwrap();
        let cfg = SolverConfig::nl(0.3).with_tolerances(1e-10, 1e-10).with_max_iters(50_000);
        let (st, _) = solve_nl(&losses, &g, &cfg, &SolverInit::default()).unwrap();
        let cert = nl_certificate(&st.x, &losses, &g, 0.3, Some(&st.y), 1e-6, 1e-4).unwrap();
        assert!(cert.certified, "{cert:?}");
        // a perturbed point is rejected
        let mut bad = st.x.clone();
        bad.row_mut(0)[0] += 0.5;
        let cert = nl_certificate(&bad, &losses, &g, 0.3, None, 1e-6, 1e-4).unwrap();
        assert!(!cert.certified);
    }

    #[test]
    fn trace_csv_header() {
        let losses = line(&[0.0, 1.0]);
        let g = WeightedGraph::path(2).unwrap();
        let (st, _) = solve_nl(&losses, &g, &SolverConfig::nl(0.1), &SolverInit::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&st.history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,objective,augmented_lagrangian,primal_residual,x_change,rho\n"));
        assert_eq!(text.lines().count(), st.history.len() + 1);
    }
}
