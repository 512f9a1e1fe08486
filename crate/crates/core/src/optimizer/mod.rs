//! Linear and mixed-integer programming for the coordinated dispatch.

pub mod bnb;
pub mod dispatch;
pub mod lp;
pub mod reference;
pub mod simplex;

pub use bnb::{branch_and_bound, branch_and_bound_from, write_node_log, MipOptions, MipResult, MipStatus, NodeLog};
pub use dispatch::{
    assemble, extract_setpoints, full_solution, ramp_limit, reduced_instance, solve_milp, solve_milp_from, DispatchError,
    DispatchOptions, DispatchProblem, DispatchSolution, DispatchStatus, FullLayout, OltcLimits, ReducedLayout,
    Setpoint, StepData, StepLinearization, Weights,
};
pub use lp::{LpBuilder, LpInstance, Violation};
pub use reference::{solve_lp_dense, ReferenceSolution};
pub use simplex::{solve_lp, solve_lp_with, BasisState, LpError, LpSolution, SimplexOptions, VarStatus};
