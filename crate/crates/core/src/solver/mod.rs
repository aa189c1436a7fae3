//! Layout optimization: per-antenna surrogate QPs, block-coordinate ascent
//! and the outer max-min loop.

pub mod alternating;
pub mod maxmin;
pub mod qp;
pub mod subproblem;

pub use alternating::{alternating_optimize, block_order, AlternatingOutcome};
pub use maxmin::{max_min_optimize, max_min_trajectory, select_best, SolveTrace, Trajectory};
pub use qp::{kkt_residual, qp_solve_2d, QpSolution, SubproblemSpec};
pub use subproblem::{
    build_subproblem, build_subproblem_bs, build_subproblem_rs, build_subproblem_ts,
    build_subproblem_user, BlockContext, BlockForm, Subproblem,
};
