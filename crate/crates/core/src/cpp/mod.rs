//! Set-partitioning crew pairing: bounded enumeration, a revised simplex LP,
//! branch-and-bound, soft base constraints, warm starts and a rolling-window
//! driver.

mod bnb;
mod master;
mod pool;
mod simplex;
mod warm;
mod windows;

pub use bnb::{branch_and_bound, BnbConfig, BnbNode, BnbStats, BranchRule, MasterSolution};
pub use master::{add_base_constraints, BaseTargets, Evaluation, MasterProblem, Penalties, Var};
pub use pool::{enumerate_pairings, pairing_cost, Column, ColumnPool, ConnectionGraph, CostConfig, EnumerationLimits, Provenance};
pub use simplex::{solve_lp, Basis, Lp, LpSolution, SimplexOptions};
pub use warm::{warm_start, WarmMode};
pub use windows::{solve_windows, write_metrics_csv, CppMetrics, CppSolution, SolveConfig, SolvedPairing, WindowConfig};
