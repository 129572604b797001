//! Convex objectives of the form `f(x) = sum_p S_p^q`, where `S_p` is the
//! sum of page `p`'s coordinates, and the solver parameters derived from them.
//!
//! Coordinates are passed grouped by page: `x[p - 1]` holds the variables
//! `x_{p,1}, x_{p,2}, ...` of page `p`.

use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};

/// Sum of q-th powers of per-page sums; `q = 1` is the linear (total fault) case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    q: f64,
}

impl Objective {
    pub fn linear() -> Self {
        Self { q: 1.0 }
    }

    pub fn power(q: f64) -> Result<Self> {
        if !(q >= 1.0) || !q.is_finite() {
            return Err(PagingError::Domain(format!(
                "growth exponent q={q} must be a finite value >= 1"
            )));
        }
        Ok(Self { q })
    }

    /// The min-max surrogate: `q = log2 n`, clamped to at least 1.
    pub fn minmax(pages: usize) -> Self {
        Self {
            q: (pages.max(1) as f64).log2().max(1.0),
        }
    }

    /// Parses `l1`, `lq:<q>` or `minmax` (the latter needs the page count).
    pub fn parse(spec: &str, pages: usize) -> Result<Self> {
        match spec {
            "l1" => Ok(Self::linear()),
            "minmax" => Ok(Self::minmax(pages)),
            other => {
                let q = other
                    .strip_prefix("lq:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| PagingError::UnknownObjective(other.to_string()))?;
                Self::power(q)
            }
        }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn is_linear(&self) -> bool {
        self.q == 1.0
    }

    /// `S^q` for one page sum.
    pub fn page_value(&self, s: f64) -> f64 {
        if self.is_linear() {
            s
        } else {
            s.powf(self.q)
        }
    }

    /// `q S^(q-1)`, shared by every coordinate of the page.
    pub fn page_derivative(&self, s: f64) -> f64 {
        if self.is_linear() {
            1.0
        } else {
            self.q * s.powf(self.q - 1.0)
        }
    }

    /// Reciprocal of the page derivative; `+inf` where the derivative vanishes.
    pub fn growth_rate(&self, s: f64) -> f64 {
        if self.is_linear() {
            1.0
        } else {
            1.0 / self.page_derivative(s)
        }
    }

    pub fn eval_sums(&self, sums: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for &s in sums {
            if !(s >= 0.0) {
                return Err(PagingError::Domain(format!("negative page sum {s}")));
            }
            total += self.page_value(s);
        }
        Ok(total)
    }

    pub fn eval(&self, x: &[Vec<f64>]) -> Result<f64> {
        if let Some(v) = x.iter().flatten().find(|v| !(**v >= 0.0)) {
            return Err(PagingError::Domain(format!("negative coordinate {v}")));
        }
        self.eval_sums(&page_sums(x))
    }

    pub fn grad(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|page| {
                let g = self.page_derivative(page.iter().sum());
                vec![g; page.len()]
            })
            .collect()
    }

    /// Fenchel conjugate `sup_{u >= 0} <w, u> - f(u)`; `+inf` when unbounded.
    pub fn conjugate(&self, w: &[Vec<f64>]) -> f64 {
        let peaks = w.iter().map(|page| page.iter().copied().fold(0.0, f64::max));
        if self.is_linear() {
            if peaks.into_iter().any(|v| v > 1.0) {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            peaks.map(|v| self.page_conjugate(v)).sum()
        }
    }

    /// Conjugate of `u -> u^q` at slope `v >= 0`.
    pub fn page_conjugate(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if self.is_linear() {
            return if v > 1.0 { f64::INFINITY } else { 0.0 };
        }
        let q = self.q;
        (q - 1.0) * (v / q).powf(q / (q - 1.0))
    }

    /// `<grad f(x), x> <= q f(x)` within a relative tolerance of 1e-9.
    pub fn growth_check(&self, x: &[Vec<f64>]) -> bool {
        let Ok(f) = self.eval(x) else { return false };
        let inner: f64 = x
            .iter()
            .zip(self.grad(x))
            .map(|(xs, gs)| xs.iter().zip(gs).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        inner <= self.q * f + 1e-9 * (self.q * f).max(1e-300)
    }
}

pub fn page_sums(x: &[Vec<f64>]) -> Vec<f64> {
    x.iter().map(|page| page.iter().sum()).collect()
}

/// Parameters of the continuous primal-dual solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    /// Dual growth rate.
    pub r: f64,
    pub delta: f64,
    /// Initial value of every newly created primal coordinate.
    pub eps_start: f64,
    /// Per-round feasibility slack is `max(eps_feas_scale * rhs, eps_feas_floor)`.
    pub eps_feas_scale: f64,
    pub eps_feas_floor: f64,
    /// Largest change of any single coordinate within one integration step.
    pub max_step: f64,
}

impl SolverParams {
    /// `delta = (2 q ln(k+1))^-(q-1)`, `r = delta / ln(k+1)`.
    pub fn new(k: usize, q: f64) -> Self {
        let ln = ((k + 1) as f64).ln();
        let delta = (2.0 * q * ln).powf(-(q - 1.0));
        Self {
            r: delta / ln,
            delta,
            eps_start: 1e-12,
            eps_feas_scale: 1e-9,
            eps_feas_floor: 1e-12,
            max_step: 1e-3,
        }
    }

    /// Sets `eps_start = 1e-6 / T` for a run of known length.
    pub fn with_horizon(mut self, rounds: usize) -> Self {
        self.eps_start = 1e-6 / rounds.max(1) as f64;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn eps_feas(&self, rhs: i64) -> f64 {
        (self.eps_feas_scale * rhs.max(0) as f64).max(self.eps_feas_floor)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.r > 0.0
            && self.delta > 0.0
            && self.delta <= 1.0
            && self.eps_start >= 0.0
            && self.eps_start < 1.0
            && self.eps_feas_scale > 0.0
            && self.eps_feas_floor > 0.0
            && self.max_step > 0.0
            && [self.r, self.delta, self.eps_start, self.max_step]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PagingError::Domain(format!("invalid solver parameters {self:?}")))
        }
    }
}

pub fn default_params(k: usize, q: f64) -> SolverParams {
    SolverParams::new(k, q)
}

/// `(2 q ln(k+1))^q`, the competitive bound certified by the dual.
pub fn certified_bound(k: usize, q: f64) -> f64 {
    (2.0 * q * ((k + 1) as f64).ln()).powf(q)
}

/// `2 e ln(n) ln(k+1)`, the min-max bound for fractional solutions.
pub fn minmax_bound(k: usize, n: usize) -> f64 {
    2.0 * std::f64::consts::E * (n.max(1) as f64).ln() * ((k + 1) as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maximizes `v u - u^q` over a grid on `[0, 10]`.
    fn grid_conjugate(q: f64, v: f64) -> f64 {
        (0..=100_000)
            .map(|i| {
                let u = i as f64 * 1e-4;
                v * u - u.powf(q)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn eval_and_grad() {
        let obj = Objective::power(2.0).unwrap();
        assert_eq!(obj.eval(&[vec![0.5, 0.5], vec![2.0]]).unwrap(), 5.0);
        assert_eq!(obj.eval(&[vec![0.0; 3]]).unwrap(), 0.0);
        assert_eq!(obj.grad(&[vec![0.25, 0.75]]), vec![vec![2.0, 2.0]]);
        assert_eq!(Objective::power(3.0).unwrap().grad(&[vec![2.0]]), vec![vec![12.0]]);
        assert_eq!(obj.grad(&[vec![0.0]]), vec![vec![0.0]]);
        assert_eq!(Objective::linear().eval(&[vec![3.0, 1.0], vec![3.0]]).unwrap(), 7.0);
        assert!(obj.eval(&[vec![-0.1]]).is_err());
    }

    #[test]
    fn conjugate_against_grid() {
        let zero = Objective::power(2.0).unwrap().conjugate(&[vec![-1.0, 0.0]]);
        assert_eq!(zero, 0.0);
        for (q, v, expected) in [(2.0, 2.0, 1.0), (3.0, 3.0, 2.0)] {
            let obj = Objective::power(q).unwrap();
            let c = obj.conjugate(&[vec![0.5, v]]);
            assert!((c - expected).abs() < 1e-9, "q={q}: {c}");
            assert!((c - grid_conjugate(q, v)).abs() < 1e-6);
        }
        let lin = Objective::linear();
        assert_eq!(lin.conjugate(&[vec![1.0, 0.3]]), 0.0);
        assert!(lin.conjugate(&[vec![1.01]]).is_infinite());
    }

    #[test]
    fn growth_equality() {
        let x = vec![vec![0.3, 0.2], vec![1.5]];
        for q in [1.0, 2.0, 3.5] {
            let obj = Objective::power(q).unwrap();
            assert!(obj.growth_check(&x));
            assert!(obj.growth_check(&[vec![0.0]]));
        }
    }

    #[test]
    fn parameters() {
        let p = SolverParams::new(1, 1.0);
        assert_eq!(p.delta, 1.0);
        assert!((p.r - 1.0 / 2f64.ln()).abs() < 1e-12);
        let p = SolverParams::new(3, 2.0);
        let ln4 = 4f64.ln();
        assert!((p.r - 1.0 / (ln4 * 4.0 * ln4)).abs() < 1e-15);
        assert_eq!(Objective::minmax(8).q(), 3.0);
        assert_eq!(Objective::minmax(1).q(), 1.0);
        assert!((SolverParams::new(2, 2.0).with_horizon(100).eps_start - 1e-8).abs() < 1e-20);
        assert_eq!(p.eps_feas(0), 1e-12);
        assert_eq!(p.eps_feas(5), 5e-9);
    }

    #[test]
    fn parse_objectives() {
        assert_eq!(Objective::parse("l1", 4).unwrap().q(), 1.0);
        assert_eq!(Objective::parse("lq:2.5", 4).unwrap().q(), 2.5);
        assert_eq!(Objective::parse("minmax", 16).unwrap().q(), 4.0);
        assert!(matches!(Objective::parse("lq:0.5", 4), Err(PagingError::Domain(_))));
        assert!(matches!(
            Objective::parse("l2", 4),
            Err(PagingError::UnknownObjective(_))
        ));
    }
}
