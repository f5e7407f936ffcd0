use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How the x-subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum XUpdate {
    /// Exact minimization of the augmented Lagrangian (quadratic losses), falling back
    /// to the linearized update for other losses.
    Auto,
    /// Exact minimization; requires a quadratic loss.
    Exact,
    /// Bregman-linearized update with `φ = (L/2)‖·‖² - f` (Proximal ADMM).
    Linearized,
}

/// Multiplies `ρ` by `multiplier` every `period` iterations, never exceeding `cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoSchedule<T> {
    pub multiplier: T,
    pub period: usize,
    pub cap: T,
}

impl<T: Scalar> RhoSchedule<T> {
    /// ×10 every 100 iterations, capped at `2 / (0.99 σ)`.
    pub fn tenfold(sigma: T) -> Self {
        let cap = if sigma > T::zero() { T::c(2.0) / (T::c(0.99) * sigma) } else { T::infinity() };
        Self { multiplier: T::c(10.0), period: 100, cap }
    }

    /// `ρ` after completing iteration `iter` (1-based).
    pub fn next(&self, rho: T, iter: usize) -> T {
        if self.period == 0 || iter % self.period != 0 {
            return rho;
        }
        (rho * self.multiplier).min(self.cap).max(rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig<T> {
    /// Penalty weight `γ >= 0` (zero disables the penalty).
    pub gamma: T,
    /// Cardinality budget `K`; ignored by Network Lasso.
    pub k: usize,
    pub rho: T,
    pub x_update: XUpdate,
    /// Linearization constant for [`XUpdate::Linearized`]; defaults to `max_i L_i`.
    pub lipschitz: Option<T>,
    pub max_iters: usize,
    pub eps_abs: T,
    pub eps_rel: T,
    pub rho_schedule: Option<RhoSchedule<T>>,
    /// The run aborts once the objective exceeds this multiple of `max(|F(x⁰)|, 1)`.
    pub divergence_factor: T,
    /// `r` used for the Lyapunov coefficient `L2² / (σρ(1-r))`.
    pub lyapunov_r: T,
}

impl<T: Scalar> SolverConfig<T> {
    /// Trimmed-lasso defaults: `ρ = 10⁴`.
    pub fn ntl(gamma: T, k: usize) -> Self {
        Self::base(gamma, k, T::c(1e4))
    }

    /// Network Lasso defaults: `ρ = 1`.
    pub fn nl(gamma: T) -> Self {
        Self::base(gamma, 0, T::one())
    }

    fn base(gamma: T, k: usize, rho: T) -> Self {
        Self {
            gamma,
            k,
            rho,
            x_update: XUpdate::Auto,
            lipschitz: None,
            max_iters: 1000,
            eps_abs: T::c(1e-5),
            eps_rel: T::c(1e-5),
            rho_schedule: None,
            divergence_factor: T::c(1e12),
            lyapunov_r: T::c(0.9),
        }
    }

    pub fn with_rho(mut self, rho: T) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_tolerances(mut self, eps_abs: T, eps_rel: T) -> Self {
        self.eps_abs = eps_abs;
        self.eps_rel = eps_rel;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_x_update(mut self, x_update: XUpdate) -> Self {
        self.x_update = x_update;
        self
    }

    pub fn with_rho_schedule(mut self, schedule: RhoSchedule<T>) -> Self {
        self.rho_schedule = Some(schedule);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: T| v > T::zero() && v.is_finite();
        if !(self.gamma >= T::zero()) || !self.gamma.is_finite() {
            return Err(Error::param(format!("gamma must be finite and non-negative, got {}", self.gamma)));
        }
        if !positive(self.rho) {
            return Err(Error::param(format!("rho must be positive, got {}", self.rho)));
        }
        if !positive(self.eps_abs) || !positive(self.eps_rel) {
            return Err(Error::param("tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters must be at least 1"));
        }
        if let Some(l) = self.lipschitz {
            if !positive(l) {
                return Err(Error::param(format!("linearization constant must be positive, got {l}")));
            }
        }
        if let Some(s) = &self.rho_schedule {
            if !(s.multiplier >= T::one()) || !(s.cap > T::zero()) {
                return Err(Error::param("rho schedule needs multiplier >= 1 and a positive cap"));
            }
        }
        if !(self.lyapunov_r > T::zero() && self.lyapunov_r < T::one()) {
            return Err(Error::param("lyapunov_r must lie in (0, 1)"));
        }
        if !(self.divergence_factor > T::one()) {
            return Err(Error::param("divergence_factor must exceed 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_is_monotone_and_capped() {
        let s = RhoSchedule { multiplier: 10.0, period: 100, cap: 500.0 };
        let mut rho = 1.0;
        let mut seen = vec![];
        for it in 1..=500 {
            let next = s.next(rho, it);
            assert!(next >= rho && next <= 500.0);
            rho = next;
            seen.push(rho);
        }
        assert_eq!(seen[98], 1.0);
        assert_eq!(seen[99], 10.0);
        assert_eq!(seen[299], 500.0);
        let tiny_cap = RhoSchedule { multiplier: 10.0, period: 1, cap: 0.5 };
        assert_eq!(tiny_cap.next(2.0, 1), 2.0);
    }

    #[test]
    fn defaults() {
        let c = SolverConfig::<f64>::ntl(1.0, 3);
        assert_eq!(c.rho, 1e4);
        assert_eq!(c.max_iters, 1000);
        assert_eq!(SolverConfig::<f64>::nl(1.0).rho, 1.0);
        assert!(c.validate().is_ok());
        assert!(SolverConfig::<f64>::nl(-1.0).validate().is_err());
        assert!(SolverConfig::<f64>::nl(1.0).with_rho(0.0).validate().is_err());
    }
}
