//! Online rounding of fractional solutions into integral cache schedules.

mod deterministic;
mod discretize;
mod randomized;

pub use deterministic::{round_deterministic, DeterministicReport, DeterministicRounder};
pub use discretize::{check_discretization, discretize_quarter_k, DiscretizationReport, Discretized};
pub use randomized::{
    default_beta, max_fault_concentration_check, round_randomized, simulate_bernoulli_maxima, ConcentrationReport,
    RandomizedRun,
};

use crate::fractional::{FractionalRecord, RoundRecord};
use crate::trace::PageId;

/// Replays a fractional trajectory round by round.
pub(crate) struct Cursor {
    /// Current coordinate `x_{p, r(p,t)}` per page.
    pub cur: Vec<f64>,
    pub occ: Vec<u32>,
    /// `B(t)` in order of first request.
    pub seen: Vec<PageId>,
}

impl Cursor {
    pub fn new(rec: &FractionalRecord) -> Self {
        Self {
            cur: vec![0.0; rec.header.pages],
            occ: vec![0; rec.header.pages],
            seen: Vec::new(),
        }
    }

    pub fn apply(&mut self, round: &RoundRecord) {
        let i = round.page as usize - 1;
        if self.occ[i] == 0 {
            self.seen.push(round.page);
        }
        self.occ[i] += 1;
        self.cur[i] = 0.0;
        for c in &round.changes {
            self.cur[c.page as usize - 1] = c.x;
        }
    }

    pub fn x(&self, page: PageId) -> f64 {
        self.cur[page as usize - 1]
    }
}
