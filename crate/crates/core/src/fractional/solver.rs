use crate::error::{PagingError, Result};
use crate::objective::{Objective, SolverParams};
use crate::trace::{ConstraintRowView, CostVector, PageId};

use super::record::{Change, FractionalRecord, RoundRecord, RunHeader, VarRecord};

const NOT_LISTED: usize = usize::MAX;
/// Coordinates this close to 1 after a step are treated as saturated.
const SATURATION_SNAP: f64 = 1e-14;

/// Summary of the last processed round.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    /// Clock time spent in the round.
    pub elapsed: f64,
    /// `|B(t)| - k`.
    pub rhs: i64,
    /// Sum of the active coordinates after the round.
    pub covered: f64,
    pub eps_feas: f64,
}

/// Incremental solver: feed requests one at a time with [`push_request`].
///
/// [`push_request`]: FractionalSolver::push_request
#[derive(Clone, Debug)]
pub struct FractionalSolver {
    k: usize,
    pages: usize,
    obj: Objective,
    params: SolverParams,
    c: f64,
    round: usize,
    tau: f64,
    occ: Vec<u32>,
    x: Vec<f64>,
    base: Vec<f64>,
    sat_at: Vec<f64>,
    s_min: Vec<f64>,
    unsat: Vec<PageId>,
    slot: Vec<usize>,
    distinct: usize,
    saturated: usize,
    last_page: PageId,
    recording: bool,
    rounds: Vec<RoundRecord>,
    vars: Vec<VarRecord>,
    // scratch
    gp: Vec<PageId>,
    gx: Vec<f64>,
    gb: Vec<f64>,
    gt: Vec<f64>,
    gnew: Vec<f64>,
    moved: Vec<bool>,
}

impl FractionalSolver {
    pub fn new(k: usize, pages: usize, obj: Objective, params: SolverParams) -> Result<Self> {
        if k == 0 {
            return Err(PagingError::Domain("cache size k must be >= 1".into()));
        }
        params.validate()?;
        Ok(Self {
            k,
            pages,
            obj,
            params,
            c: 1.0 / k as f64,
            round: 0,
            tau: 0.0,
            occ: vec![0; pages],
            x: vec![0.0; pages],
            base: vec![0.0; pages],
            sat_at: vec![f64::NAN; pages],
            s_min: vec![f64::INFINITY; pages],
            unsat: Vec::new(),
            slot: vec![NOT_LISTED; pages],
            distinct: 0,
            saturated: 0,
            last_page: 0,
            recording: false,
            rounds: Vec::new(),
            vars: Vec::new(),
            gp: Vec::new(),
            gx: Vec::new(),
            gb: Vec::new(),
            gt: Vec::new(),
            gnew: Vec::new(),
            moved: Vec::new(),
        })
    }

    /// Keeps the per-round trajectory so [`finish`](Self::finish) can return it.
    pub fn recording(mut self) -> Self {
        self.recording = true;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pages(&self) -> usize {
        self.pages
    }

    pub fn objective(&self) -> Objective {
        self.obj
    }

    pub fn params(&self) -> SolverParams {
        self.params
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Current value `x_{p, r(p,t)}`; zero for pages never requested.
    pub fn current_x(&self, page: PageId) -> f64 {
        self.x[page as usize - 1]
    }

    /// Pages already requested whose current coordinate is below 1.
    pub fn unsaturated(&self) -> &[PageId] {
        &self.unsat
    }

    /// Per-page fractional cost so far.
    pub fn costs(&self) -> CostVector {
        let values = (0..self.pages).map(|i| self.base[i] + self.x[i]).collect();
        CostVector::from_values(values).expect("coordinates are nonnegative")
    }

    /// Active set and right-hand side of the last processed round, rebuilt
    /// from the solver's own bookkeeping.
    pub fn current_row(&self) -> ConstraintRowView {
        let active = (0..self.pages)
            .filter(|&i| self.occ[i] > 0 && i as PageId + 1 != self.last_page)
            .map(|i| (i as PageId + 1, self.occ[i]))
            .collect();
        ConstraintRowView {
            round: self.round,
            active,
            rhs: self.distinct as i64 - self.k as i64,
        }
    }

    fn rate(&self, s: f64) -> f64 {
        self.obj.growth_rate(s)
    }

    fn list(&mut self, p: PageId) {
        let i = p as usize - 1;
        debug_assert_eq!(self.slot[i], NOT_LISTED);
        self.slot[i] = self.unsat.len();
        self.unsat.push(p);
    }

    fn unlist(&mut self, p: PageId) {
        let i = p as usize - 1;
        let at = self.slot[i];
        if at == NOT_LISTED {
            return;
        }
        self.unsat.swap_remove(at);
        if let Some(&moved) = self.unsat.get(at) {
            self.slot[moved as usize - 1] = at;
        }
        self.slot[i] = NOT_LISTED;
    }

    fn close_var(&mut self, i: usize) {
        let saturated = !self.sat_at[i].is_nan();
        let z = if saturated {
            self.params.r * (self.tau - self.sat_at[i])
        } else {
            0.0
        };
        if self.recording {
            self.vars.push(VarRecord {
                page: i as PageId + 1,
                j: self.occ[i],
                x: self.x[i],
                z,
                s_min: self.s_min[i],
            });
        }
    }

    /// Serves round `t + 1` requesting `page`.
    pub fn push_request(&mut self, page: PageId) -> Result<RoundOutcome> {
        if page == 0 || page as usize > self.pages {
            return Err(PagingError::PageOutOfRange {
                page: page as u64,
                n: self.pages,
            });
        }
        self.round += 1;
        let t = self.round;
        let i = page as usize - 1;
        if self.occ[i] == 0 {
            self.distinct += 1;
        } else {
            self.close_var(i);
            if self.sat_at[i].is_nan() {
                self.unlist(page);
            } else {
                self.saturated -= 1;
            }
            self.base[i] += self.x[i];
        }
        self.occ[i] += 1;
        self.x[i] = self.params.eps_start;
        self.sat_at[i] = f64::NAN;
        self.s_min[i] = self.rate(self.base[i] + self.x[i]);
        self.last_page = page;

        let rhs = self.distinct as i64 - self.k as i64;
        let eps = self.params.eps_feas(rhs);
        let sat_before = self.saturated;
        let need = rhs as f64 - sat_before as f64;

        self.gp.clear();
        self.gp.extend_from_slice(&self.unsat);
        self.gp.sort_unstable();
        self.gx.clear();
        self.gb.clear();
        for &p in &self.gp {
            self.gx.push(self.x[p as usize - 1]);
            self.gb.push(self.base[p as usize - 1]);
        }
        let start_x = self.gx.clone();

        let mut elapsed = 0.0;
        let mut newly_saturated: Vec<(usize, f64)> = Vec::new();
        if rhs > 0 && self.gx.iter().sum::<f64>() < need {
            if need > self.gx.len() as f64 {
                return Err(PagingError::InfeasibleRow {
                    round: t,
                    rhs,
                    active: self.distinct - 1,
                });
            }
            elapsed = if self.obj.is_linear() {
                self.grow_linear(need, eps, &mut newly_saturated)?
            } else {
                self.grow_convex(need, eps, &mut newly_saturated)?
            };
        }

        // write back
        let tau_start = self.tau;
        let mut dz = self.params.r * elapsed * sat_before as f64;
        for &(g, offset) in &newly_saturated {
            let p = self.gp[g];
            let pi = p as usize - 1;
            self.sat_at[pi] = tau_start + offset;
            dz += self.params.r * (elapsed - offset);
        }
        let mut changes = Vec::new();
        for (g, &sx) in start_x.iter().enumerate() {
            let p = self.gp[g];
            let pi = p as usize - 1;
            let nx = self.gx[g];
            if nx != sx {
                self.x[pi] = nx;
                self.s_min[pi] = self.s_min[pi].min(self.rate(self.gb[g] + nx));
                if self.recording {
                    changes.push(Change {
                        page: p,
                        j: self.occ[pi],
                        x: nx,
                    });
                }
            }
        }
        for &(g, _) in &newly_saturated {
            let p = self.gp[g];
            self.unlist(p);
            self.saturated += 1;
        }
        self.tau = tau_start + elapsed;
        self.list(page);

        let covered = self.gx.iter().sum::<f64>() + sat_before as f64;
        if self.recording {
            let new_change = Change {
                page,
                j: self.occ[i],
                x: self.x[i],
            };
            let at = changes.partition_point(|c| c.page < page);
            changes.insert(at, new_change);
            self.rounds.push(RoundRecord {
                page,
                y: self.params.r * elapsed,
                tau: self.tau,
                dz,
                changes,
            });
        }
        Ok(RoundOutcome {
            round: t,
            elapsed,
            rhs,
            covered,
            eps_feas: eps,
        })
    }

    /// Closed-form growth for the linear objective (`s = 1`).
    fn grow_linear(&mut self, need: f64, eps: f64, saturated: &mut Vec<(usize, f64)>) -> Result<f64> {
        let c = self.c;
        let goal = need + 0.5 * eps;
        let mut elapsed = 0.0;
        let mut live: Vec<usize> = (0..self.gx.len()).collect();
        let mut fixed = 0.0;
        loop {
            let mass: f64 = live.iter().map(|&g| self.gx[g] + c).sum();
            let target = goal - fixed + live.len() as f64 * c;
            let dt_goal = (target / mass).ln().max(0.0);
            let top = live
                .iter()
                .copied()
                .max_by(|&a, &b| self.gx[a].total_cmp(&self.gx[b]).then(b.cmp(&a)))
                .expect("growth set is nonempty while the constraint is open");
            let dt_sat = ((1.0 + c) / (self.gx[top] + c)).ln().max(0.0);
            if dt_goal < dt_sat {
                let factor = dt_goal.exp();
                for &g in &live {
                    self.gx[g] = ((self.gx[g] + c) * factor - c).min(1.0);
                }
                elapsed += dt_goal;
                return Ok(elapsed);
            }
            let factor = dt_sat.exp();
            elapsed += dt_sat;
            let mut keep = Vec::with_capacity(live.len());
            for &g in &live {
                let nx = (self.gx[g] + c) * factor - c;
                if g == top || nx >= 1.0 - SATURATION_SNAP {
                    self.gx[g] = 1.0;
                    fixed += 1.0;
                    saturated.push((g, elapsed));
                } else {
                    self.gx[g] = nx;
                    keep.push(g);
                }
            }
            live = keep;
            if fixed >= need {
                return Ok(elapsed);
            }
            if live.is_empty() {
                return Err(self.abort("constraint still open with every coordinate saturated"));
            }
        }
    }

    fn abort(&self, reason: &str) -> PagingError {
        PagingError::SolverAbort {
            round: self.round,
            reason: reason.to_string(),
        }
    }

    /// Implicit stepping for `q > 1`.
    fn grow_convex(&mut self, need: f64, eps: f64, saturated: &mut Vec<(usize, f64)>) -> Result<f64> {
        let q = self.obj.q();
        let c = self.c;
        let max_step = self.params.max_step;
        let mut elapsed = 0.0;
        let mut live: Vec<usize> = (0..self.gx.len()).collect();
        let mut fixed = 0.0;
        self.gt.resize(self.gx.len(), 0.0);
        self.gnew.resize(self.gx.len(), 0.0);
        self.moved.resize(self.gx.len(), false);
        let mut guard = 0usize;
        loop {
            guard += 1;
            if guard > 10_000_000 {
                return Err(self.abort("step limit exceeded"));
            }
            let sum_live: f64 = live.iter().map(|&g| self.gx[g]).sum();
            let target = need - fixed;
            if sum_live >= target {
                return Ok(elapsed);
            }
            // largest step keeping every coordinate within max_step of its start
            let mut dt = f64::INFINITY;
            let mut lead = usize::MAX;
            for &g in &live {
                let x0 = self.gx[g];
                let tgt = (x0 + max_step).min(1.0);
                self.gt[g] = tgt;
                let s = growth(q, self.gb[g] + tgt);
                let d = ((tgt - x0) / (x0 + c)).ln_1p() / s;
                if !d.is_finite() {
                    return Err(self.abort("non-finite step length"));
                }
                if d < dt {
                    dt = d;
                    lead = g;
                }
            }
            let mut trial_sum = 0.0;
            for &g in &live {
                let nx = if g == lead {
                    self.gt[g]
                } else {
                    let x0 = self.gx[g];
                    let explicit = x0 + (x0 + c) * (dt * growth(q, self.gb[g] + x0)).exp_m1();
                    solve_coordinate(q, c, x0, self.gb[g], self.gt[g], dt, explicit)
                };
                self.gnew[g] = nx;
                trial_sum += nx;
            }
            if trial_sum >= target {
                let goal_hi = target + eps;
                let dt_hit = if trial_sum <= goal_hi {
                    dt
                } else {
                    self.find_landing(&live, dt, target, goal_hi)
                };
                elapsed += dt_hit;
                for &g in &live {
                    let nx = self.gnew[g];
                    if nx >= 1.0 - SATURATION_SNAP {
                        self.gx[g] = 1.0;
                        saturated.push((g, elapsed));
                    } else {
                        self.gx[g] = nx;
                    }
                }
                return Ok(elapsed);
            }
            elapsed += dt;
            let mut keep = Vec::with_capacity(live.len());
            for &g in &live {
                let nx = self.gnew[g];
                if nx >= 1.0 - SATURATION_SNAP {
                    self.gx[g] = 1.0;
                    fixed += 1.0;
                    saturated.push((g, elapsed));
                } else {
                    self.gx[g] = nx;
                    keep.push(g);
                }
            }
            live = keep;
            if fixed >= need {
                return Ok(elapsed);
            }
            if live.is_empty() {
                return Err(self.abort("constraint still open with every coordinate saturated"));
            }
        }
    }

    /// Finds `dt` in `(0, dt_max]` with `sum x(dt)` in `[lo_goal, hi_goal]`,
    /// leaving the landing values in `gnew`.
    fn find_landing(&mut self, live: &[usize], dt_max: f64, lo_goal: f64, hi_goal: f64) -> f64 {
        let q = self.obj.q();
        let c = self.c;
        let mid_goal = 0.5 * (lo_goal + hi_goal);
        let mut lo = 0.0;
        let mut hi = dt_max;
        let mut best_hi = self.gnew.clone();
        // secant-like start using the derivative at dt = 0
        let mut d: f64 = {
            let rate0: f64 = live
                .iter()
                .map(|&g| growth(q, self.gb[g] + self.gx[g]) * (self.gx[g] + c))
                .sum();
            let sum0: f64 = live.iter().map(|&g| self.gx[g]).sum();
            let guess = (mid_goal - sum0) / rate0;
            if guess.is_finite() && guess > 0.0 && guess < hi {
                guess
            } else {
                0.5 * hi
            }
        };
        for _ in 0..200 {
            let mut sum = 0.0;
            let mut deriv = 0.0;
            for &g in live {
                let nx = solve_coordinate(q, c, self.gx[g], self.gb[g], self.gt[g], d, self.gnew[g]);
                self.gnew[g] = nx;
                sum += nx;
                let s_tot = self.gb[g] + nx;
                let s = growth(q, s_tot);
                let phi_x = 1.0 / (nx + c) + d * (q - 1.0) * s / s_tot;
                deriv += s / phi_x;
            }
            if sum >= lo_goal && sum <= hi_goal {
                return d;
            }
            if sum < lo_goal {
                lo = d;
            } else {
                hi = d;
                best_hi.copy_from_slice(&self.gnew);
            }
            let newton = d - (sum - mid_goal) / deriv;
            d = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        self.gnew.copy_from_slice(&best_hi);
        hi
    }

    /// Closes all open coordinates and returns the complete record.
    /// Without [`recording`](Self::recording) the record has no rounds or vars.
    pub fn finish(mut self) -> FractionalRecord {
        for i in 0..self.pages {
            if self.occ[i] > 0 {
                self.close_var(i);
            }
        }
        self.vars.sort_by_key(|v| (v.page, v.j));
        FractionalRecord {
            header: RunHeader {
                k: self.k,
                pages: self.pages,
                rounds: self.round,
                q: self.obj.q(),
                r: self.params.r,
                delta: self.params.delta,
                eps_start: self.params.eps_start,
            },
            rounds: self.rounds,
            vars: self.vars,
        }
    }
}

/// `1 / (q S^(q-1))`.
fn growth(q: f64, s: f64) -> f64 {
    1.0 / (q * s.powf(q - 1.0))
}

/// Solves `ln((x + c) / (x0 + c)) = dt * growth(b + x)` for `x` in `[x0, hi]`.
/// `guess` seeds the Newton iteration.
fn solve_coordinate(q: f64, c: f64, x0: f64, b: f64, hi: f64, dt: f64, guess: f64) -> f64 {
    if dt <= 0.0 {
        return x0;
    }
    if hi - x0 > b {
        solve_in_log_sum(q, c, x0, b, hi, dt, guess)
    } else {
        solve_in_x(q, c, x0, b, hi, dt, guess)
    }
}

/// Newton on `u = ln(b + x)`, well conditioned when `b + x` spans decades.
fn solve_in_log_sum(q: f64, c: f64, x0: f64, b: f64, hi: f64, dt: f64, guess: f64) -> f64 {
    let ln_q = q.ln();
    let g = |u: f64| {
        let s_tot = u.exp();
        let x = s_tot - b;
        let s = (-(q - 1.0) * u - ln_q).exp();
        let val = ((x - x0) / (x0 + c)).ln_1p() - dt * s;
        let der = s_tot / (x + c) + dt * (q - 1.0) * s;
        (val, der)
    };
    let lo = (b + x0).ln();
    let hi_u = (b + hi).ln();
    let u = bracketed_newton(lo, hi_u, (b + guess).ln(), g, 1e-15);
    (u.exp() - b).clamp(x0, hi)
}

fn solve_in_x(q: f64, c: f64, x0: f64, b: f64, hi: f64, dt: f64, guess: f64) -> f64 {
    let g = |x: f64| {
        let s_tot = b + x;
        let s = growth(q, s_tot);
        let val = ((x - x0) / (x0 + c)).ln_1p() - dt * s;
        let der = 1.0 / (x + c) + dt * (q - 1.0) * s / s_tot;
        (val, der)
    };
    bracketed_newton(x0, hi, guess, g, 1e-16 * (1.0 + hi)).clamp(x0, hi)
}

/// Root of an increasing function on `[lo, hi]`, Newton from `start` with
/// bisection fallback. `g(lo) <= 0` is assumed, not evaluated.
fn bracketed_newton(mut lo: f64, mut hi: f64, start: f64, g: impl Fn(f64) -> (f64, f64), tol: f64) -> f64 {
    let (g_hi, _) = g(hi);
    if g_hi <= 0.0 {
        return hi;
    }
    let mut lo_seen = false;
    let mut v = if start > lo && start < hi { start } else { lo };
    let mut last_step = hi - lo;
    for _ in 0..200 {
        let (val, der) = g(v);
        if val == 0.0 {
            return v;
        }
        if val < 0.0 {
            lo = v;
            lo_seen = true;
        } else {
            hi = v;
        }
        let tol = tol.max(4.0 * f64::EPSILON * v.abs());
        let newton = v - val / der;
        if !newton.is_finite() {
            v = 0.5 * (lo + hi);
            continue;
        }
        if (newton - v).abs() <= tol {
            return newton.clamp(lo, hi);
        }
        if hi - lo <= tol {
            return v;
        }
        let next = if newton > lo && newton < hi && (2.0 * val).abs() <= (last_step * der).abs() {
            newton
        } else if newton <= lo && !lo_seen {
            lo_seen = true;
            lo
        } else {
            0.5 * (lo + hi)
        };
        last_step = (next - v).abs();
        v = next;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{build_request_index, RequestTrace};

    fn solver(k: usize, n: usize, q: f64) -> FractionalSolver {
        let obj = if q == 1.0 {
            Objective::linear()
        } else {
            Objective::power(q).unwrap()
        };
        FractionalSolver::new(k, n, obj, SolverParams::new(k, q).with_horizon(100))
            .unwrap()
            .recording()
    }

    #[test]
    fn coordinate_solver_matches_definition() {
        for (q, b, x0) in [(2.0, 0.0, 1e-8), (3.0, 0.7, 0.2), (6.9, 0.0, 1e-12), (6.9, 40.0, 1e-12)] {
            let c = 0.25;
            let hi = (x0 + 0.25f64).min(1.0);
            let dt_hi = ((hi - x0) / (x0 + c)).ln_1p() / growth(q, b + hi);
            for frac in [0.0, 1e-6, 0.3, 0.999, 1.0] {
                let dt = dt_hi * frac;
                let x = solve_coordinate(q, c, x0, b, hi, dt, 0.5 * (x0 + hi));
                assert!(x >= x0 && x <= hi);
                let lhs = ((x + c) / (x0 + c)).ln();
                let rhs = dt * growth(q, b + x);
                assert!(
                    (lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1e-12),
                    "q={q} b={b} frac={frac}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn vacuous_rounds_do_not_move_the_clock() {
        let mut s = solver(3, 3, 2.0);
        for p in [1, 2, 3, 1] {
            let out = s.push_request(p).unwrap();
            assert_eq!(out.elapsed, 0.0);
        }
        assert_eq!(s.tau(), 0.0);
    }

    #[test]
    fn forced_saturation_k1() {
        for q in [1.0, 2.0] {
            let mut s = solver(1, 2, q);
            s.push_request(1).unwrap();
            s.push_request(2).unwrap();
            assert_eq!(s.current_x(1), 1.0);
        }
    }

    #[test]
    fn symmetric_split_k2() {
        let obj = Objective::minmax(3);
        let mut s = FractionalSolver::new(2, 3, obj, SolverParams::new(2, obj.q()).with_horizon(3)).unwrap();
        for p in [1, 2, 3] {
            s.push_request(p).unwrap();
        }
        let (a, b) = (s.current_x(1), s.current_x(2));
        assert!(a > 0.0 && a < 1.0);
        assert!((a - b).abs() < 1e-12);
        assert!((a + b - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn rows_match_index() {
        let reqs = vec![1, 2, 1, 3, 4, 2, 2, 5, 1, 3, 4, 5, 1];
        let trace = RequestTrace::new(2, 5, reqs.clone()).unwrap();
        let idx = build_request_index(&trace).unwrap();
        let mut s = solver(2, 5, 2.0);
        for (t, &p) in reqs.iter().enumerate() {
            let out = s.push_request(p).unwrap();
            let row = idx.constraint_row(t + 1).unwrap();
            assert_eq!(s.current_row(), row);
            if row.rhs > 0 {
                assert!(out.covered >= row.rhs as f64);
                assert!(out.covered <= row.rhs as f64 + out.eps_feas + 1e-12);
            }
        }
    }

    #[test]
    fn alternating_k1_costs() {
        let trace = RequestTrace::new(1, 2, vec![1, 2, 1, 2, 1, 2]).unwrap();
        let rec = super::super::run_fractional(&trace, Objective::minmax(2), SolverParams::new(1, 1.0).with_horizon(6))
            .unwrap();
        let costs = rec.costs();
        // page 1: coordinates j=1,2,3 saturate; page 2: j=1,2 saturate, j=3 holds eps
        assert!((costs.get(1) - 3.0).abs() < 1e-12);
        assert!((costs.get(2) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn unknown_page_rejected() {
        let mut s = solver(2, 3, 2.0);
        assert!(matches!(s.push_request(4), Err(PagingError::PageOutOfRange { .. })));
        assert!(s.push_request(0).is_err());
    }
}
