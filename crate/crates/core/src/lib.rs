//! Min-max paging: a fractional primal-dual solver for convex paging
//! objectives, online rounding schemes, offline reference algorithms,
//! adversarial trace generators and an experiment harness.

// negated comparisons double as NaN rejection
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod error;
pub mod fractional;
pub mod harness;
pub mod objective;
pub mod offline;
pub mod policy;
pub mod rounding;
pub mod schedule;
pub mod serde_finite;
pub mod trace;

pub use adversary::{LayeredConfig, LayeredTrace};
pub use error::{PagingError, Result};
pub use fractional::{certify, dual_objective, run_fractional, DualCertificate, FractionalRecord, FractionalSolver};
pub use objective::{default_params, Objective, SolverParams};
pub use offline::{belady, brute_force_minmax_opt, greedy_lfd, layered_offline_cost, LayeredMetadata, PhaseMeta};
pub use policy::{run_policy, OnlinePolicy, PolicySpec, ServeOutcome};
pub use schedule::{Schedule, ScheduleStep};
pub use trace::{
    build_request_index, lq_cost, minmax_cost, ConstraintRowView, CostModel, CostVector, PageId, RequestIndex,
    RequestTrace,
};
