use serde::{Deserialize, Serialize};

use crate::fractional::FractionalRecord;
use crate::serde_finite;
use crate::trace::CostVector;

/// A solution on the grid `{0, 1/(4k), ..., 1}`, stored as numerators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discretized {
    pub k: usize,
    /// Numerator over `4k` for each coordinate, in record order.
    pub numerators: Vec<u32>,
}

impl Discretized {
    pub fn denominator(&self) -> u32 {
        4 * self.k as u32
    }

    pub fn value(&self, i: usize) -> f64 {
        self.numerators[i] as f64 / self.denominator() as f64
    }
}

/// Drops coordinates below `1/(8k)`, doubles the rest and rounds them up to a
/// multiple of `1/(4k)`, capped at 1.
pub fn discretize_value(x: f64, k: usize) -> u32 {
    let k = k as f64;
    if x < 1.0 / (8.0 * k) {
        0
    } else {
        ((8.0 * k * x).ceil() as u32).min(4 * k as u32)
    }
}

pub fn discretize_quarter_k(rec: &FractionalRecord) -> Discretized {
    let k = rec.header.k;
    Discretized {
        k,
        numerators: rec.vars.iter().map(|v| discretize_value(v.x, k)).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationReport {
    pub on_grid: bool,
    pub feasible: bool,
    /// First round whose covering constraint fails, if any.
    pub first_infeasible_round: Option<usize>,
    #[serde(with = "serde_finite")]
    pub minmax_before: f64,
    #[serde(with = "serde_finite")]
    pub minmax_after: f64,
    /// Largest single-coordinate blow-up `x* / x` over coordinates that grew.
    #[serde(with = "serde_finite")]
    pub max_coordinate_ratio: f64,
    pub within_three: bool,
}

/// Checks grid membership, covering feasibility (in exact integer arithmetic)
/// and the min-max cost blow-up of a discretized solution.
pub fn check_discretization(rec: &FractionalRecord, disc: &Discretized) -> DiscretizationReport {
    let h = &rec.header;
    let den = disc.denominator() as i64;
    let on_grid = disc.numerators.len() == rec.vars.len() && disc.numerators.iter().all(|&u| u as i64 <= den);

    // numerator of each page's current coordinate as the trace is replayed
    let mut offset = vec![0usize; h.pages + 1];
    for v in &rec.vars {
        offset[v.page as usize] += 1;
    }
    for p in 1..=h.pages {
        offset[p] += offset[p - 1];
    }
    let mut occ = vec![0u32; h.pages];
    let mut current = vec![0i64; h.pages];
    let mut total = 0i64;
    let mut distinct = 0i64;
    let mut first_infeasible_round = None;
    for (i, round) in rec.rounds.iter().enumerate() {
        let pi = round.page as usize - 1;
        if occ[pi] == 0 {
            distinct += 1;
        }
        occ[pi] += 1;
        let idx = offset[pi] + occ[pi] as usize - 1;
        let value = disc.numerators.get(idx).copied().unwrap_or(0) as i64;
        total += value - current[pi];
        current[pi] = value;
        let rhs = distinct - h.k as i64;
        if rhs > 0 && total - current[pi] < rhs * den && first_infeasible_round.is_none() {
            first_infeasible_round = Some(i + 1);
        }
    }

    let mut after = CostVector::zeros(h.pages);
    let mut max_coordinate_ratio: f64 = 0.0;
    for (i, v) in rec.vars.iter().enumerate() {
        let xs = disc.value(i);
        after.add(v.page, xs);
        if xs > v.x && v.x > 0.0 {
            max_coordinate_ratio = max_coordinate_ratio.max(xs / v.x);
        }
    }
    let minmax_before = rec.costs().minmax();
    let minmax_after = after.minmax();
    DiscretizationReport {
        on_grid,
        feasible: first_infeasible_round.is_none(),
        first_infeasible_round,
        minmax_before,
        minmax_after,
        max_coordinate_ratio,
        within_three: minmax_after <= 3.0 * minmax_before + 1e-9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_rule() {
        assert_eq!(discretize_value(0.1, 1), 0);
        assert_eq!(discretize_value(0.3, 1), 3);
        assert_eq!(discretize_value(1.0, 1), 4);
        assert_eq!(discretize_value(1.0, 3), 12);
        assert_eq!(discretize_value(0.125, 1), 1);
        assert_eq!(discretize_value(0.9, 2), 8);
    }
}
