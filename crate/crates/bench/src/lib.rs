//! Fixtures shared by the benchmarks.

use minmax_paging::adversary::uniform_random;
use minmax_paging::{FractionalRecord, Objective, RequestTrace, SolverParams};

/// A seeded uniform trace over `2k` pages.
pub fn uniform_trace(k: usize, len: usize) -> RequestTrace {
    uniform_random(k, 2 * k, len, 42).expect("valid trace parameters")
}

/// Min-max fractional solution of `trace` with default parameters.
pub fn minmax_solution(trace: &RequestTrace) -> FractionalRecord {
    let obj = Objective::minmax(trace.pages());
    let params = SolverParams::new(trace.k(), obj.q()).with_horizon(trace.len());
    minmax_paging::run_fractional(trace, obj, params).expect("solver succeeds on fixture traces")
}
