//! ADMM and Proximal ADMM for `min f(x) + γ P(D x)`, plus convergence diagnostics.

mod admm;
mod config;
mod diagnostics;

pub use admm::{solve_nl, solve_ntl, Admm, IterRecord, PenaltyKind, SolverInit, SolverState, StopReason};
pub use config::{RhoSchedule, SolverConfig, XUpdate};
pub use diagnostics::{
    nl_certificate, stationarity_check, validate_convergence_params, write_trace_csv, ConvergenceParams,
    NlCertificate, StationarityOptions, StationarityReport,
};
