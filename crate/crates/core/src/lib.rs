//! Joint bandwidth and power allocation for terminals that transmit over
//! several radio access technologies at once.
//!
//! The optimizer maximizes `Σ β_q b_pq ln(1 + c_pq p_pq / b_pq)` under
//! per-RAT bandwidth and per-terminal power budgets by dual decomposition,
//! solving each pair's bandwidth equation with a safeguarded Newton or
//! chord iteration.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod capacity;
pub mod channel;
pub mod diagnose;
pub mod error;
pub mod experiments;
pub mod model;
pub mod oracle;
pub mod rootfind;
pub mod solver;

pub use capacity::{kkt_residuals, total_capacity, Capacity, KktReport};
pub use channel::{generate_channel, ChannelModelParams, Fading};
pub use error::{Error, Result};
pub use model::{
    check_feasibility, validate_scenario, Allocation, ChannelMatrix, DualPrices, FeasibilityReport, InnerMethod,
    Matrix, Mmt, Rat, Scenario, SolverConfig, ValidationReport,
};
pub use rootfind::{RootProblem, RootTrace};
pub use solver::{solve, solve_parallel, solve_switched, Mode, SolveResult, SolveTrace};
