use serde::Serialize;

use crate::centroids::Centroids;
use crate::error::{check_dim, Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::BandedCholesky;
use crate::losses::LossSpec;
use crate::penalty::{prox_trimmed_in_place, shrink_in_place, trimmed_sum, BlockVector};
use crate::scalar::{norm2, Scalar};

use super::config::{SolverConfig, XUpdate};

/// Which graph penalty the solver minimizes alongside the losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    /// `T_K(D x)`, the Network Trimmed Lasso.
    Trimmed { k: usize },
    /// `Σ w_ij ‖x_i - x_j‖`, the Network Lasso.
    Weighted,
}

/// Starting point. Missing parts default to the per-node minimizers (or zeros when
/// a loss has none) and `y = 0`; `z` always starts at `D x⁰`.
#[derive(Debug, Clone, Default)]
pub struct SolverInit<T> {
    pub x0: Option<Centroids<T>>,
    pub y0: Option<BlockVector<T>>,
}

impl<T> SolverInit<T> {
    pub fn from_x(x0: Centroids<T>) -> Self {
        Self { x0: Some(x0), y0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterRecord<T> {
    pub iter: usize,
    pub objective: T,
    pub augmented_lagrangian: T,
    /// `‖z - D x‖` after the dual update.
    pub primal_residual: T,
    /// `‖x^{t+1} - x^t‖`.
    pub x_change: T,
    /// `ρ‖D(x^{t+1} - x^t)‖`.
    pub dual_residual: T,
    pub rho: T,
    /// `L_ρ + c‖x^{t+1} - x^t‖²`, absent when `c` is undefined (`σ = 0` with a linearized update).
    pub lyapunov: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T> {
    pub x: Centroids<T>,
    pub z: BlockVector<T>,
    pub y: BlockVector<T>,
    pub rho: T,
    pub iter: usize,
    pub history: Vec<IterRecord<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// ADMM for `min f(x) + γ P(D x)` with the split `z = D x` and unscaled dual `y`.
///
/// One iteration is z-update (prox), x-update (exact or linearized), then
/// `y ← y + ρ(z - D x)`. The x-update system matrix is factored once per value of `ρ`.
#[derive(Debug)]
pub struct Admm<'a, T> {
    losses: &'a LossSpec<T>,
    graph: &'a WeightedGraph<T>,
    config: SolverConfig<T>,
    penalty: PenaltyKind,
    linearized: bool,
    lip: T,
    quad: Vec<(Vec<T>, Vec<T>)>,
    factor: Option<(T, BandedCholesky<T>)>,
    lyapunov_base: Option<T>,
}

impl<'a, T: Scalar> Admm<'a, T> {
    pub fn new(
        losses: &'a LossSpec<T>,
        graph: &'a WeightedGraph<T>,
        config: SolverConfig<T>,
        penalty: PenaltyKind,
    ) -> Result<Self> {
        config.validate()?;
        check_dim(graph.n(), losses.n())?;
        if let PenaltyKind::Trimmed { k } = penalty {
            if k > graph.m() {
                return Err(Error::param(format!("K = {k} exceeds the edge count {}", graph.m())));
            }
        }
        let linearized = match config.x_update {
            XUpdate::Linearized => true,
            XUpdate::Auto => !losses.is_quadratic(),
            XUpdate::Exact => {
                if !losses.is_quadratic() {
                    return Err(Error::param("the exact x-update needs a quadratic loss"));
                }
                false
            }
        };
        let lip = config.lipschitz.unwrap_or_else(|| losses.max_smoothness());
        if linearized && !(lip > T::zero()) {
            return Err(Error::param("the linearized x-update needs a positive smoothness constant"));
        }
        let quad = if linearized {
            Vec::new()
        } else {
            (0..losses.n())
                .map(|i| losses.quadratic_form(i).expect("quadratic loss"))
                .collect()
        };
        let lyapunov_base = if linearized {
            let sigma = graph.difference_operator(losses.p()).sigma_min_ddt();
            (sigma > T::zero()).then(|| lip * lip / (sigma * (T::one() - config.lyapunov_r)))
        } else {
            Some(T::zero())
        };
        Ok(Self { losses, graph, config, penalty, linearized, lip, quad, factor: None, lyapunov_base })
    }

    pub fn config(&self) -> &SolverConfig<T> {
        &self.config
    }

    pub fn is_linearized(&self) -> bool {
        self.linearized
    }

    /// Linearization constant `L` (meaningful for the linearized update).
    pub fn lipschitz(&self) -> T {
        self.lip
    }

    fn p(&self) -> usize {
        self.losses.p()
    }

    fn d_apply(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.graph.m() * self.p()];
        self.graph.difference_operator(self.p()).apply_slice(x, &mut out);
        out
    }

    fn dt_apply(&self, z: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.graph.n() * self.p()];
        self.graph.difference_operator(self.p()).apply_transpose_slice(z, &mut out);
        out
    }

    /// Penalty value `P(z)` without the factor `γ`.
    pub fn penalty_value(&self, z: &BlockVector<T>) -> T {
        match self.penalty {
            PenaltyKind::Trimmed { k } => trimmed_sum(&z.block_norms(), k),
            PenaltyKind::Weighted => z
                .block_norms()
                .iter()
                .zip(self.graph.weights())
                .map(|(&n, &w)| n * w)
                .sum(),
        }
    }

    /// `f(x) + γ P(D x)`.
    pub fn objective(&self, x: &Centroids<T>) -> Result<T> {
        let f = self.losses.total(x)?;
        let dx = self.graph.difference_operator(self.p()).apply(x)?;
        Ok(f + self.config.gamma * self.penalty_value(&dx))
    }

    /// `f(x) + γP(z) + yᵀ(z - Dx) + (ρ/2)‖z - Dx‖²`.
    pub fn augmented_lagrangian(&self, x: &Centroids<T>, z: &BlockVector<T>, y: &BlockVector<T>, rho: T) -> Result<T> {
        check_dim(z.m(), y.m())?;
        let f = self.losses.total(x)?;
        let dx = self.d_apply(x.as_slice());
        check_dim(dx.len(), z.as_slice().len())?;
        let mut lin = T::zero();
        let mut sq = T::zero();
        for ((&zi, &yi), &di) in z.as_slice().iter().zip(y.as_slice()).zip(&dx) {
            let r = zi - di;
            lin += yi * r;
            sq += r * r;
        }
        Ok(f + self.config.gamma * self.penalty_value(z) + lin + T::c(0.5) * rho * sq)
    }

    /// `prox_{(γ/ρ)P}(D x - y/ρ)`, the exact minimizer of `L_ρ(x, ·, y)`.
    pub fn z_update(&self, x: &Centroids<T>, y: &BlockVector<T>, rho: T) -> BlockVector<T> {
        let dx = self.d_apply(x.as_slice());
        let data: Vec<T> = dx.iter().zip(y.as_slice()).map(|(&d, &yv)| d - yv / rho).collect();
        let mut a = BlockVector::from_flat(self.graph.m(), self.p(), data).expect("edge block layout");
        let gamma = self.config.gamma;
        if gamma == T::zero() {
            return a;
        }
        match self.penalty {
            PenaltyKind::Trimmed { k } => {
                prox_trimmed_in_place(&mut a, k, gamma / rho);
            }
            PenaltyKind::Weighted => {
                for (e, &w) in self.graph.weights().iter().enumerate() {
                    shrink_in_place(a.block_mut(e), gamma * w / rho);
                }
            }
        }
        a
    }

    /// Band-stores `diag(H_i) + ρ DᵀD` and factors it, reusing the factor while `ρ` is unchanged.
    fn ensure_factor(&mut self, rho: T) -> Result<()> {
        if matches!(&self.factor, Some((r, _)) if *r == rho) {
            return Ok(());
        }
        let (n, p) = (self.graph.n(), self.p());
        let big_n = n * p;
        let span = self.graph.max_span();
        let bw = if self.graph.m() == 0 { p - 1 } else { (p * span).max(p - 1) };
        let bw = bw.min(big_n.saturating_sub(1));
        let w = bw + 1;
        let mut band = vec![T::zero(); big_n * w];
        let mut deg = vec![0usize; n];
        for &(i, j) in self.graph.edges() {
            deg[i] += 1;
            deg[j] += 1;
            for c in 0..p {
                let (row, col) = (j * p + c, i * p + c);
                band[row * w + col + bw - row] -= rho;
            }
        }
        for i in 0..n {
            for c in 0..p {
                let row = i * p + c;
                for d in 0..=c {
                    let col = i * p + d;
                    let h = if self.linearized {
                        if c == d { self.lip } else { T::zero() }
                    } else {
                        self.quad[i].0[c * p + d]
                    };
                    band[row * w + col + bw - row] += h;
                }
                band[row * w + bw] += rho * T::from_usize_lossy(deg[i]);
            }
        }
        let chol = BandedCholesky::from_lower_band(big_n, bw, band)?;
        self.factor = Some((rho, chol));
        Ok(())
    }

    fn solve_with_factor(&mut self, rho: T, mut rhs: Vec<T>) -> Result<Centroids<T>> {
        self.ensure_factor(rho)?;
        let (_, chol) = self.factor.as_ref().expect("factor present");
        chol.solve_in_place(&mut rhs);
        Centroids::from_flat(self.graph.n(), self.p(), rhs)
    }

    /// Solves `(H + ρDᵀD) x = g + Dᵀ(y + ρz)` where `∇f(x) = Hx - g`.
    pub fn x_update_exact(&mut self, z: &BlockVector<T>, y: &BlockVector<T>, rho: T) -> Result<Centroids<T>> {
        if self.linearized {
            return Err(Error::param("solver is configured for the linearized x-update"));
        }
        let combo: Vec<T> = y.as_slice().iter().zip(z.as_slice()).map(|(&yv, &zv)| yv + rho * zv).collect();
        let mut rhs = self.dt_apply(&combo);
        let p = self.p();
        for (i, (_, g)) in self.quad.iter().enumerate() {
            for c in 0..p {
                rhs[i * p + c] += g[c];
            }
        }
        self.solve_with_factor(rho, rhs)
    }

    /// `(I + (ρ/L)DᵀD)⁻¹ (x - ∇f(x)/L + Dᵀ(y + ρz)/L)`, solved as
    /// `(L I + ρDᵀD) x⁺ = L x - ∇f(x) + Dᵀ(y + ρz)`.
    pub fn x_update_linearized(
        &mut self,
        x: &Centroids<T>,
        z: &BlockVector<T>,
        y: &BlockVector<T>,
        rho: T,
    ) -> Result<Centroids<T>> {
        if !self.linearized {
            return Err(Error::param("solver is configured for the exact x-update"));
        }
        let combo: Vec<T> = y.as_slice().iter().zip(z.as_slice()).map(|(&yv, &zv)| yv + rho * zv).collect();
        let mut rhs = self.dt_apply(&combo);
        let grad = self.losses.total_gradient(x)?;
        for ((r, &xv), &gv) in rhs.iter_mut().zip(x.as_slice()).zip(grad.as_slice()) {
            *r += self.lip * xv - gv;
        }
        self.solve_with_factor(rho, rhs)
    }

    /// `y + ρ(z - D x)`.
    pub fn y_update(&self, y: &BlockVector<T>, z: &BlockVector<T>, x: &Centroids<T>, rho: T) -> BlockVector<T> {
        let dx = self.d_apply(x.as_slice());
        let mut out = y.clone();
        for ((o, &zv), &dv) in out.as_mut_slice().iter_mut().zip(z.as_slice()).zip(&dx) {
            *o += rho * (zv - dv);
        }
        out
    }

    pub fn initial_state(&self, init: &SolverInit<T>) -> Result<SolverState<T>> {
        let (n, p, m) = (self.graph.n(), self.p(), self.graph.m());
        let x = match &init.x0 {
            Some(x0) => {
                check_dim(n, x0.n())?;
                check_dim(p, x0.p())?;
                x0.clone()
            }
            None => self.losses.minimizers().unwrap_or_else(|_| Centroids::zeros(n, p)),
        };
        let y = match &init.y0 {
            Some(y0) => {
                check_dim(m, y0.m())?;
                check_dim(p, y0.p())?;
                y0.clone()
            }
            None => BlockVector::zeros(m, p),
        };
        let z = BlockVector::from_flat(m, p, self.d_apply(x.as_slice()))?;
        Ok(SolverState { x, z, y, rho: self.config.rho, iter: 0, history: Vec::new() })
    }

    /// One full iteration. Returns the record and whether the stop test passed.
    pub fn step(&mut self, state: &mut SolverState<T>) -> Result<(IterRecord<T>, bool)> {
        let rho = state.rho;
        let z = self.z_update(&state.x, &state.y, rho);
        let x = if self.linearized {
            self.x_update_linearized(&state.x, &z, &state.y, rho)?
        } else {
            self.x_update_exact(&z, &state.y, rho)?
        };
        let y = self.y_update(&state.y, &z, &x, rho);

        let dx_new = self.d_apply(x.as_slice());
        let delta: Vec<T> = x.as_slice().iter().zip(state.x.as_slice()).map(|(&a, &b)| a - b).collect();
        let x_change = norm2(&delta);
        let dual_residual = rho * norm2(&self.d_apply(&delta));
        let primal_residual = z
            .as_slice()
            .iter()
            .zip(&dx_new)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt();

        let (n, p, m) = (self.graph.n(), self.p(), self.graph.m());
        let (ea, er) = (self.config.eps_abs, self.config.eps_rel);
        let sqrt = |k: usize| T::from_usize_lossy(k).sqrt();
        let primal_ok = primal_residual <= sqrt(p * m) * ea + er * z.norm().max(norm2(&dx_new));
        let x_ok = x_change <= sqrt(p * n) * ea + er * norm2(x.as_slice());
        let second_ok = match self.penalty {
            PenaltyKind::Trimmed { .. } => x_ok,
            PenaltyKind::Weighted if m == 0 => x_ok,
            PenaltyKind::Weighted => dual_residual <= sqrt(p * m) * ea + er * y.norm(),
        };

        let objective = self.objective(&x)?;
        let augmented_lagrangian = self.augmented_lagrangian(&x, &z, &y, rho)?;
        let lyapunov = self.lyapunov_base.map(|b| augmented_lagrangian + b / rho * x_change * x_change);

        state.x = x;
        state.z = z;
        state.y = y;
        state.iter += 1;
        let record = IterRecord {
            iter: state.iter,
            objective,
            augmented_lagrangian,
            primal_residual,
            x_change,
            dual_residual,
            rho,
            lyapunov,
        };
        state.history.push(record);
        if let Some(s) = &self.config.rho_schedule {
            state.rho = s.next(rho, state.iter);
        }
        Ok((record, primal_ok && second_ok))
    }

    /// Iterates until the stop test passes or `max_iters` is reached.
    pub fn run(&mut self, state: &mut SolverState<T>) -> Result<StopReason> {
        let start = self.objective(&state.x)?;
        let guard = self.config.divergence_factor * start.abs().max(T::one());
        for _ in 0..self.config.max_iters {
            let (rec, done) = self.step(state)?;
            if !rec.objective.is_finite() || rec.objective > guard {
                return Err(Error::Diverged {
                    iter: rec.iter,
                    objective: rec.objective.as_f64(),
                    guard: guard.as_f64(),
                });
            }
            if done {
                return Ok(StopReason::Converged);
            }
        }
        Ok(StopReason::MaxIters)
    }
}

/// Network Trimmed Lasso: `min Σ f_i(x_i) + γ T_K(D x)` with `K = config.k`.
pub fn solve_ntl<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    config: &SolverConfig<T>,
    init: &SolverInit<T>,
) -> Result<(SolverState<T>, StopReason)> {
    let mut admm = Admm::new(losses, graph, config.clone(), PenaltyKind::Trimmed { k: config.k })?;
    let mut state = admm.initial_state(init)?;
    let stop = admm.run(&mut state)?;
    Ok((state, stop))
}

/// Network Lasso: `min Σ f_i(x_i) + γ Σ w_ij ‖x_i - x_j‖`.
pub fn solve_nl<T: Scalar>(
    losses: &LossSpec<T>,
    graph: &WeightedGraph<T>,
    config: &SolverConfig<T>,
    init: &SolverInit<T>,
) -> Result<(SolverState<T>, StopReason)> {
    let mut admm = Admm::new(losses, graph, config.clone(), PenaltyKind::Weighted)?;
    let mut state = admm.initial_state(init)?;
    let stop = admm.run(&mut state)?;
    Ok((state, stop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightScheme;

    fn line(values: &[f64]) -> LossSpec<f64> {
        LossSpec::squared_distance(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exact_update_two_node_example() {
        let losses = line(&[0.0, 2.0]);
        let g = WeightedGraph::path(2).unwrap();
        let mut admm = Admm::new(&losses, &g, SolverConfig::nl(1.0), PenaltyKind::Weighted).unwrap();
        let z = BlockVector::zeros(1, 1);
        let y = BlockVector::zeros(1, 1);
        let x = admm.x_update_exact(&z, &y, 1.0).unwrap();
        assert!((x.as_slice()[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((x.as_slice()[1] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn exact_update_without_edges_returns_minimizers() {
        let losses = line(&[1.5, -2.0, 0.25]);
        let g = WeightedGraph::new(3, []).unwrap();
        let mut admm = Admm::new(&losses, &g, SolverConfig::nl(1.0), PenaltyKind::Weighted).unwrap();
        let z = BlockVector::zeros(0, 1);
        let x = admm.x_update_exact(&z, &z, 3.0).unwrap();
        assert_eq!(x.as_slice(), &[1.5, -2.0, 0.25]);
    }

    #[test]
    fn linearized_update_is_gradient_step_without_edges() {
        let losses = LossSpec::<f64>::quadratic(1, vec![vec![2.0], vec![4.0]], vec![vec![1.0], vec![0.0]]).unwrap();
        let g = WeightedGraph::new(2, []).unwrap();
        let cfg = SolverConfig::nl(1.0).with_x_update(XUpdate::Linearized);
        let mut admm = Admm::new(&losses, &g, cfg, PenaltyKind::Weighted).unwrap();
        let x = Centroids::from_flat(2, 1, vec![1.0, 1.0]).unwrap();
        let z = BlockVector::zeros(0, 1);
        let out = admm.x_update_linearized(&x, &z, &z, 1.0).unwrap();
        // L = 4: x - ∇f/L = (1 - 1/4, 1 - 4/4)
        assert!((out.as_slice()[0] - 0.75).abs() < 1e-15);
        assert!(out.as_slice()[1].abs() < 1e-15);
    }

    #[test]
    fn y_update_formula() {
        let losses = line(&[0.0, 0.0, 0.0]);
        let g = WeightedGraph::path(3).unwrap();
        let admm = Admm::new(&losses, &g, SolverConfig::nl(1.0), PenaltyKind::Weighted).unwrap();
        let x = Centroids::zeros(3, 1);
        let z = BlockVector::from_scalars(&[1.0, -1.0]);
        let y = admm.y_update(&BlockVector::zeros(2, 1), &z, &x, 1.0);
        assert_eq!(y.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn rejects_k_above_edge_count() {
        let losses = line(&[0.0, 1.0]);
        let g = WeightedGraph::path(2).unwrap();
        assert!(Admm::new(&losses, &g, SolverConfig::ntl(1.0, 2), PenaltyKind::Trimmed { k: 2 }).is_err());
    }

    #[test]
    fn two_node_nl_closed_form() {
        let losses = line(&[0.0, 2.0]);
        let g = WeightedGraph::path(2).unwrap();
        for &gamma in &[0.0, 0.3, 0.8, 1.0, 1.7] {
            let cfg = SolverConfig::nl(gamma).with_tolerances(1e-10, 1e-10).with_max_iters(20_000);
            let (st, stop) = solve_nl(&losses, &g, &cfg, &SolverInit::default()).unwrap();
            assert_eq!(stop, StopReason::Converged);
            let want = if gamma >= 1.0 { [1.0, 1.0] } else { [gamma, 2.0 - gamma] };
            for (a, b) in st.x.as_slice().iter().zip(want) {
                assert!((a - b).abs() < 1e-6, "gamma {gamma}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn complete_graph_large_gamma_gives_mean() {
        let pts: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![3.0, 1.0], vec![-1.0, 4.0], vec![2.0, 2.0]];
        let losses = LossSpec::squared_distance(&pts).unwrap();
        let g = WeightedGraph::complete(4, WeightScheme::Uniform).unwrap();
        let cfg = SolverConfig::nl(50.0).with_tolerances(1e-10, 1e-10).with_max_iters(20_000);
        let (st, _) = solve_nl(&losses, &g, &cfg, &SolverInit::default()).unwrap();
        for r in st.x.rows() {
            assert!((r[0] - 1.0).abs() < 1e-6 && (r[1] - 1.75).abs() < 1e-6);
        }
    }

    #[test]
    fn ntl_with_k_equal_m_returns_data() {
        let losses = line(&[0.0, 5.0, 1.0]);
        let g = WeightedGraph::path(3).unwrap();
        let cfg = SolverConfig::ntl(10.0, 2);
        let (st, stop) = solve_ntl(&losses, &g, &cfg, &SolverInit::default()).unwrap();
        assert_eq!(stop, StopReason::Converged);
        for (a, b) in st.x.as_slice().iter().zip([0.0, 5.0, 1.0]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn dual_identity_holds_each_iteration() {
        let losses = line(&[0.0, 1.0, 4.0, 4.5]);
        let g = WeightedGraph::path(4).unwrap();
        let mut admm = Admm::new(&losses, &g, SolverConfig::ntl(2.0, 1).with_rho(3.0), PenaltyKind::Trimmed { k: 1 }).unwrap();
        let mut st = admm.initial_state(&SolverInit::default()).unwrap();
        for _ in 0..20 {
            let y_old = st.y.clone();
            admm.step(&mut st).unwrap();
            let dx = g.difference_operator(1).apply(&st.x).unwrap();
            for k in 0..3 {
                let want = y_old.as_slice()[k] + 3.0 * (st.z.as_slice()[k] - dx.as_slice()[k]);
                assert_eq!(st.y.as_slice()[k], want);
            }
        }
    }
}
