//! Integral cache schedules: per-round eviction decisions, replay and costs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};
use crate::trace::{CostModel, CostVector, PageId, RequestTrace};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub fault: bool,
    /// Pages evicted in this round, in eviction order.
    pub evicted: Vec<PageId>,
}

/// Eviction decisions for every round of a trace, plus their cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub algorithm: String,
    pub steps: Vec<ScheduleStep>,
    /// Faults per page (fetch model).
    pub faults: CostVector,
}

impl Schedule {
    /// Builds a schedule from decisions, validating them by replay.
    pub fn from_steps(algorithm: &str, trace: &RequestTrace, steps: Vec<ScheduleStep>) -> Result<Self> {
        let faults = replay(trace, &steps)?.fetch;
        Ok(Self {
            algorithm: algorithm.to_string(),
            steps,
            faults,
        })
    }

    pub fn minmax(&self) -> f64 {
        self.faults.minmax()
    }

    pub fn total(&self) -> f64 {
        self.faults.l1()
    }

    pub fn costs(&self, trace: &RequestTrace, model: CostModel) -> Result<CostVector> {
        let r = replay(trace, &self.steps)?;
        Ok(match model {
            CostModel::Fetch => r.fetch,
            CostModel::Eviction => r.eviction,
        })
    }

    /// One line per round: `t <round> fault=<0|1> evict=<ids|-> cache=<sorted ids>`.
    /// Several evictions in one round are comma separated.
    pub fn to_text(&self, trace: &RequestTrace) -> String {
        let mut out = String::new();
        let mut cache = BTreeSet::new();
        for (i, (step, &p)) in self.steps.iter().zip(trace.requests()).enumerate() {
            for q in &step.evicted {
                cache.remove(q);
            }
            cache.insert(p);
            let evict = if step.evicted.is_empty() {
                "-".to_string()
            } else {
                join(step.evicted.iter())
            };
            let _ = writeln!(
                out,
                "t {} fault={} evict={} cache={}",
                i + 1,
                u8::from(step.fault),
                evict,
                join(cache.iter())
            );
        }
        out
    }
}

fn join<'a>(ids: impl Iterator<Item = &'a PageId>) -> String {
    ids.map(|p| p.to_string()).collect::<Vec<_>>().join(",")
}

/// Costs of a replayed schedule under both accounting models.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayCosts {
    pub fetch: CostVector,
    pub eviction: CostVector,
}

/// Replays decisions against a trace, rejecting illegal steps.
pub fn replay(trace: &RequestTrace, steps: &[ScheduleStep]) -> Result<ReplayCosts> {
    if steps.len() != trace.len() {
        return Err(PagingError::Interface(format!(
            "schedule has {} steps for {} requests",
            steps.len(),
            trace.len()
        )));
    }
    let mut cache = BTreeSet::new();
    let mut fetch = vec![0u64; trace.pages()];
    let mut eviction = vec![0u64; trace.pages()];
    for (i, (step, &p)) in steps.iter().zip(trace.requests()).enumerate() {
        let t = i + 1;
        let fault = !cache.contains(&p);
        if fault != step.fault {
            return Err(PagingError::InvariantViolation {
                round: t,
                reason: format!("recorded fault flag {} but page {p} cached = {}", step.fault, !fault),
            });
        }
        for &q in &step.evicted {
            if q == p || !cache.remove(&q) {
                return Err(PagingError::InvariantViolation {
                    round: t,
                    reason: format!("evicts page {q}, which is not an evictable cached page"),
                });
            }
            eviction[q as usize - 1] += 1;
        }
        if fault {
            fetch[p as usize - 1] += 1;
            cache.insert(p);
        }
        if cache.len() > trace.k() {
            return Err(PagingError::InvariantViolation {
                round: t,
                reason: format!("cache holds {} pages, capacity {}", cache.len(), trace.k()),
            });
        }
    }
    Ok(ReplayCosts {
        fetch: CostVector::from_counts(&fetch),
        eviction: CostVector::from_counts(&eviction),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(fault: bool, evicted: &[PageId]) -> ScheduleStep {
        ScheduleStep {
            fault,
            evicted: evicted.to_vec(),
        }
    }

    #[test]
    fn replay_and_models() {
        let trace = RequestTrace::new(1, 2, vec![1, 2, 1, 1]).unwrap();
        let steps = vec![step(true, &[]), step(true, &[1]), step(true, &[2]), step(false, &[])];
        let costs = replay(&trace, &steps).unwrap();
        assert_eq!(costs.fetch.values(), &[2.0, 1.0]);
        assert_eq!(costs.eviction.values(), &[1.0, 1.0]);
        let s = Schedule::from_steps("manual", &trace, steps).unwrap();
        assert_eq!(
            s.to_text(&trace),
            "t 1 fault=1 evict=- cache=1\nt 2 fault=1 evict=1 cache=2\nt 3 fault=1 evict=2 cache=1\nt 4 fault=0 evict=- cache=1\n"
        );
    }

    #[test]
    fn illegal_steps_rejected() {
        let trace = RequestTrace::new(1, 2, vec![1, 2]).unwrap();
        assert!(replay(&trace, &[step(true, &[]), step(true, &[])]).is_err());
        assert!(replay(&trace, &[step(true, &[]), step(true, &[2])]).is_err());
        assert!(replay(&trace, &[step(false, &[]), step(true, &[1])]).is_err());
        assert!(replay(&trace, &[step(true, &[])]).is_err());
    }
}
