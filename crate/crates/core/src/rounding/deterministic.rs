use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};
use crate::fractional::FractionalRecord;
use crate::schedule::{Schedule, ScheduleStep};
use crate::trace::{CostVector, PageId, RequestTrace};

use super::Cursor;

/// Threshold rounding: the integral cache keeps every page whose current
/// coordinate is below `1/k`, and on a fault evicts the cached page with the
/// largest coordinate (smallest id on ties).
#[derive(Clone, Debug)]
pub struct DeterministicRounder {
    k: usize,
    cache: Vec<PageId>,
    faults: Vec<u64>,
}

impl DeterministicRounder {
    pub fn new(k: usize, pages: usize) -> Self {
        Self {
            k,
            cache: Vec::with_capacity(k),
            faults: vec![0; pages],
        }
    }

    pub fn contains(&self, page: PageId) -> bool {
        self.cache.contains(&page)
    }

    pub fn cache_sorted(&self) -> Vec<PageId> {
        let mut c = self.cache.clone();
        c.sort_unstable();
        c
    }

    pub fn faults(&self) -> &[u64] {
        &self.faults
    }

    /// Serves `page` after the fractional state of the round is known;
    /// `x_of(q)` must return `x_{q, r(q,t)}`. Returns the fault flag and the
    /// evicted page.
    pub fn serve(
        &mut self,
        round: usize,
        page: PageId,
        tol: f64,
        x_of: impl Fn(PageId) -> f64,
    ) -> Result<(bool, Option<PageId>)> {
        if self.cache.contains(&page) {
            return Ok((false, None));
        }
        self.faults[page as usize - 1] += 1;
        let mut evicted = None;
        if self.cache.len() >= self.k {
            let threshold = 1.0 / self.k as f64 - tol;
            let mut best: Option<(usize, f64)> = None;
            for (i, &q) in self.cache.iter().enumerate() {
                let x = x_of(q);
                if x < threshold {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bx)) => x > bx || (x == bx && q < self.cache[bi]),
                };
                if better {
                    best = Some((i, x));
                }
            }
            let (i, _) = best.ok_or_else(|| PagingError::InvariantViolation {
                round,
                reason: format!("no cached page has coordinate >= 1/k - {tol:e} while serving page {page}"),
            })?;
            evicted = Some(self.cache.swap_remove(i));
        }
        self.cache.push(page);
        Ok((true, evicted))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicReport {
    pub schedule: Schedule,
    pub fractional: CostVector,
    /// Largest number of pages that had to be cached in one round.
    pub max_required: usize,
    pub rounds_checked: usize,
    /// Per page, `faults - k * fractional - 1` at its worst (<= 0 passes).
    pub worst_page_excess: f64,
    pub per_page_bound_ok: bool,
}

/// Rounds a recorded fractional run, checking the threshold invariant in
/// every round.
pub fn round_deterministic(rec: &FractionalRecord) -> Result<DeterministicReport> {
    let h = &rec.header;
    let trace = RequestTrace::new(h.k, h.pages, rec.requests())?;
    let k = h.k;
    let mut rounder = DeterministicRounder::new(k, h.pages);
    let mut cursor = Cursor::new(rec);
    let mut steps = Vec::with_capacity(rec.rounds.len());
    let mut max_required = 0;
    for (i, round) in rec.rounds.iter().enumerate() {
        let t = i + 1;
        cursor.apply(round);
        let rhs = cursor.seen.len() as i64 - k as i64;
        let tol = 2.0 * (1e-9 * rhs.max(0) as f64).max(1e-12);
        let (fault, evicted) = rounder.serve(t, round.page, tol, |q| cursor.x(q))?;
        steps.push(ScheduleStep {
            fault,
            evicted: evicted.into_iter().collect(),
        });
        let threshold = 1.0 / k as f64 - tol;
        let mut required = 0;
        for &p in &cursor.seen {
            if cursor.x(p) < threshold {
                required += 1;
                if !rounder.contains(p) {
                    return Err(PagingError::InvariantViolation {
                        round: t,
                        reason: format!("page {p} has coordinate {} < 1/k but is not cached", cursor.x(p)),
                    });
                }
            }
        }
        if required > k {
            return Err(PagingError::InvariantViolation {
                round: t,
                reason: format!("{required} pages below the 1/k threshold, capacity {k}"),
            });
        }
        max_required = max_required.max(required);
    }
    let schedule = Schedule::from_steps("deterministic-rounding", &trace, steps)?;
    let fractional = rec.costs();
    let worst_page_excess = schedule
        .faults
        .values()
        .iter()
        .zip(fractional.values())
        .map(|(&f, &x)| f - k as f64 * x - 1.0)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(DeterministicReport {
        per_page_bound_ok: worst_page_excess <= 1e-6,
        schedule,
        fractional,
        max_required,
        rounds_checked: rec.rounds.len(),
        worst_page_excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::run_fractional;
    use crate::objective::{Objective, SolverParams};

    #[test]
    fn keeps_pages_below_threshold() {
        let mut r = DeterministicRounder::new(2, 3);
        let xs = [0.0, 0.4, 0.7];
        let x_of = |p: PageId| xs[p as usize - 1];
        r.serve(1, 1, 0.0, x_of).unwrap();
        r.serve(2, 2, 0.0, x_of).unwrap();
        // page 2 (x = 0.4 < 1/2) must stay; page 1 has x = 0 too, so nothing is evictable
        assert!(r.serve(3, 3, 0.0, x_of).is_err());
        let xs = [0.6, 0.4, 0.0];
        let mut r = DeterministicRounder::new(2, 3);
        let x_of = |p: PageId| xs[p as usize - 1];
        r.serve(1, 1, 0.0, x_of).unwrap();
        r.serve(2, 2, 0.0, x_of).unwrap();
        assert_eq!(r.serve(3, 3, 0.0, x_of).unwrap(), (true, Some(1)));
    }

    #[test]
    fn warm_up_only() {
        let trace = RequestTrace::new(3, 3, vec![1, 2, 3, 1, 2]).unwrap();
        let obj = Objective::minmax(3);
        let rec = run_fractional(&trace, obj, SolverParams::new(3, obj.q()).with_horizon(5)).unwrap();
        let rep = round_deterministic(&rec).unwrap();
        assert_eq!(rep.schedule.faults.values(), &[1.0, 1.0, 1.0]);
        assert!(rep.fractional.minmax() < 1e-5);
    }

    #[test]
    fn k1_alternating() {
        let trace = RequestTrace::new(1, 2, vec![1, 2, 1, 2]).unwrap();
        let rec = run_fractional(&trace, Objective::linear(), SolverParams::new(1, 1.0).with_horizon(4)).unwrap();
        let rep = round_deterministic(&rec).unwrap();
        assert_eq!(rep.schedule.faults.values(), &[2.0, 2.0]);
        assert!(rep.per_page_bound_ok);
    }
}
