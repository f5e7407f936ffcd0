//! Network Lasso and Network Trimmed Lasso.
//!
//! Node losses `f_i` over a weighted graph are fitted jointly with either the
//! weighted sum of edge differences (Network Lasso) or the trimmed sum that leaves
//! the `K` largest edge differences unpenalized (Network Trimmed Lasso). Nodes whose
//! fitted vectors coincide across edges form clusters.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common `f64` case.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod centroids;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod losses;
pub mod path;
pub mod penalty;
pub mod scalar;
pub mod solver;
pub mod thresholds;

pub use centroids::Centroids;
pub use error::{Error, Result};
pub use graph::{DifferenceOperator, WeightScheme, WeightedGraph};
pub use losses::{LossSpec, NodeLoss};
pub use path::{
    adjusted_rand_index, extract_partition, gamma_path, k_path, midpoint_init, partition_relation, Partition,
    PathOptions, PathResult, Relation,
};
pub use penalty::{directional_derivative, prox_group_l2, prox_trimmed, trimmed_norm, BlockVector};
pub use scalar::Scalar;
pub use solver::{solve_nl, solve_ntl, SolverConfig, SolverInit, SolverState, StopReason, XUpdate};
pub use thresholds::{exact_penalty_threshold, recovery_interval, recovery_interval_cc};

pub type Graph = WeightedGraph<f64>;
pub type Losses = LossSpec<f64>;
pub type Points = Centroids<f64>;
pub type Blocks = BlockVector<f64>;
pub type Config = SolverConfig<f64>;
pub type State = SolverState<f64>;
pub type Path = PathResult<f64>;

pub type Graph32 = WeightedGraph<f32>;
pub type Losses32 = LossSpec<f32>;
pub type Points32 = Centroids<f32>;
pub type Config32 = SolverConfig<f32>;
