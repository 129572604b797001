//! Dual objective and the invariant checks that certify a fractional run.

use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};
use crate::objective::{certified_bound, Objective};
use crate::serde_finite;
use crate::trace::PageId;

use super::record::FractionalRecord;

/// Primal value, conjugate dual value and their ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    /// `f(x)` at the final solution.
    #[serde(with = "serde_finite")]
    pub primal: f64,
    /// `sum_t (|B(t)| - k) y_t - sum z`.
    #[serde(with = "serde_finite")]
    pub dual_linear: f64,
    /// `f*(A^T y - z)`; `+inf` when the conjugate diverges.
    #[serde(with = "serde_finite")]
    pub dual_conjugate: f64,
    /// `dual_linear - dual_conjugate`; `-inf` when unusable.
    #[serde(with = "serde_finite")]
    pub dual: f64,
    #[serde(with = "serde_finite")]
    pub ratio: f64,
    /// `(2 q ln(k+1))^q`.
    #[serde(with = "serde_finite")]
    pub bound: f64,
}

impl DualCertificate {
    pub fn is_usable(&self) -> bool {
        self.dual.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Additive slack on the dual-slack check.
    pub slack_tol: f64,
    /// The lower bound on `x` is checked up to `xlb_tol * k`.
    pub xlb_tol: f64,
    /// Relative slack on weak duality, the rate inequality and the ratio bound.
    pub rel_tol: f64,
    pub eps_feas_scale: f64,
    pub eps_feas_floor: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            slack_tol: 1e-6,
            xlb_tol: 1e-6,
            rel_tol: 1e-9,
            eps_feas_scale: 1e-9,
            eps_feas_floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub checked: usize,
    pub violations: usize,
    /// Largest amount by which an inequality was exceeded (0 when none).
    #[serde(with = "serde_finite")]
    pub worst_excess: f64,
    pub first_violation: Option<String>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            pass: true,
            checked: 0,
            violations: 0,
            worst_excess: 0.0,
            first_violation: None,
        }
    }

    /// Records `lhs <= rhs`.
    fn le(&mut self, lhs: f64, rhs: f64, what: impl FnOnce() -> String) {
        self.checked += 1;
        let ok = lhs <= rhs;
        if !ok {
            self.pass = false;
            self.violations += 1;
            let excess = lhs - rhs;
            if !(excess <= self.worst_excess) {
                self.worst_excess = excess;
            }
            if self.first_violation.is_none() {
                self.first_violation = Some(format!("{}: {lhs} > {rhs}", what()));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub certificate: DualCertificate,
    pub feasibility: CheckResult,
    pub dual_slack: CheckResult,
    pub x_lower_bound: CheckResult,
    pub weak_duality: CheckResult,
    pub rate: CheckResult,
    pub ratio_bound: CheckResult,
    pub conjugate_bound: CheckResult,
    /// Part of `f(x)` contributed by the initial values of new coordinates.
    #[serde(with = "serde_finite")]
    pub start_offset_cost: f64,
}

impl CertificateReport {
    pub fn checks(&self) -> [&CheckResult; 7] {
        [
            &self.feasibility,
            &self.dual_slack,
            &self.x_lower_bound,
            &self.weak_duality,
            &self.rate,
            &self.ratio_bound,
            &self.conjugate_bound,
        ]
    }

    pub fn pass(&self) -> bool {
        self.checks().iter().all(|c| c.pass)
    }
}

/// Windows and dual sums derived from a record.
struct Derived {
    /// `rhs_t = |B(t)| - k`.
    rhs: Vec<i64>,
    /// `request_rounds[p-1][j-1] = t(p, j)`.
    request_rounds: Vec<Vec<usize>>,
    /// `prefix[t] = y_1 + ... + y_t`.
    prefix: Vec<f64>,
}

fn derive(rec: &FractionalRecord) -> Result<Derived> {
    let n = rec.header.pages;
    let mut request_rounds = vec![Vec::new(); n];
    let mut rhs = Vec::with_capacity(rec.rounds.len());
    let mut prefix = Vec::with_capacity(rec.rounds.len() + 1);
    prefix.push(0.0);
    let mut distinct = 0i64;
    for (i, round) in rec.rounds.iter().enumerate() {
        let p = round.page;
        if p == 0 || p as usize > n {
            return Err(PagingError::PageOutOfRange { page: p as u64, n });
        }
        let slot = &mut request_rounds[p as usize - 1];
        if slot.is_empty() {
            distinct += 1;
        }
        slot.push(i + 1);
        rhs.push(distinct - rec.header.k as i64);
        prefix.push(prefix[i] + round.y);
    }
    for v in &rec.vars {
        let count = request_rounds[v.page as usize - 1].len() as u32;
        if v.j == 0 || v.j > count {
            return Err(PagingError::Parse(format!(
                "coordinate ({}, {}) does not correspond to a request",
                v.page, v.j
            )));
        }
    }
    let total: usize = request_rounds.iter().map(Vec::len).sum();
    if total != rec.vars.len() {
        return Err(PagingError::Parse(format!(
            "{} coordinates recorded for {} requests",
            rec.vars.len(),
            total
        )));
    }
    Ok(Derived {
        rhs,
        request_rounds,
        prefix,
    })
}

impl Derived {
    /// `sum_{t = t(p,j)+1}^{t(p,j+1)-1} y_t`.
    fn window_y(&self, page: PageId, j: u32) -> f64 {
        let rounds = &self.request_rounds[page as usize - 1];
        let start = rounds[j as usize - 1];
        let end = rounds.get(j as usize).map_or(self.prefix.len() - 1, |&next| next - 1);
        if end <= start {
            0.0
        } else {
            self.prefix[end] - self.prefix[start]
        }
    }
}

fn objective_of(rec: &FractionalRecord) -> Result<Objective> {
    if rec.header.q == 1.0 {
        Ok(Objective::linear())
    } else {
        Objective::power(rec.header.q)
    }
}

fn certificate(rec: &FractionalRecord, d: &Derived, obj: Objective) -> Result<DualCertificate> {
    let k = rec.header.k;
    let primal = obj.eval(&rec.x_by_page())?;
    let sum_z: f64 = rec.vars.iter().map(|v| v.z).sum();
    let linear: f64 = rec
        .rounds
        .iter()
        .zip(&d.rhs)
        .map(|(r, &rhs)| rhs as f64 * r.y)
        .sum::<f64>()
        - sum_z;
    let mut peaks = vec![0.0f64; rec.header.pages];
    for v in &rec.vars {
        let w = d.window_y(v.page, v.j) - v.z;
        let peak = &mut peaks[v.page as usize - 1];
        *peak = peak.max(w);
    }
    let conjugate = if obj.is_linear() {
        // tolerate rounding noise at the kink of the linear conjugate
        if peaks.iter().all(|&w| w <= 1.0 + 1e-9) {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        peaks.iter().map(|&w| obj.page_conjugate(w)).sum()
    };
    let dual = if conjugate.is_finite() {
        linear - conjugate
    } else {
        f64::NEG_INFINITY
    };
    let ratio = if dual > 0.0 { primal / dual } else { f64::NAN };
    Ok(DualCertificate {
        primal,
        dual_linear: linear,
        dual_conjugate: conjugate,
        dual,
        ratio,
        bound: certified_bound(k, obj.q()),
    })
}

/// Evaluates `D(y, z)` and the primal value of a completed run.
pub fn dual_objective(rec: &FractionalRecord) -> Result<DualCertificate> {
    let d = derive(rec)?;
    certificate(rec, &d, objective_of(rec)?)
}

/// Re-checks every certificate invariant of a fractional run.
pub fn certify(rec: &FractionalRecord, opts: &CertifyOptions) -> Result<CertificateReport> {
    let h = &rec.header;
    let obj = objective_of(rec)?;
    let d = derive(rec)?;
    let cert = certificate(rec, &d, obj)?;
    let k = h.k as f64;
    let ln_k1 = (k + 1.0).ln();
    let r = h.r;

    let mut feasibility = CheckResult::new("feasibility");
    let mut rate = CheckResult::new("rate");
    let n = h.pages;
    let mut cur = vec![0.0f64; n];
    let mut closed = vec![0.0f64; n];
    let mut occ = vec![0u32; n];
    let mut seen: Vec<PageId> = Vec::new();
    let mut start_offset_cost = 0.0;
    for (i, round) in rec.rounds.iter().enumerate() {
        let t = i + 1;
        let pt = round.page;
        let pi = pt as usize - 1;
        if occ[pi] == 0 {
            seen.push(pt);
        } else {
            closed[pi] += cur[pi];
            cur[pi] = 0.0;
        }
        occ[pi] += 1;
        let mut df_dyn = 0.0;
        for c in &round.changes {
            if c.page == 0 || c.page as usize > n || c.j != occ[c.page as usize - 1] {
                return Err(PagingError::Parse(format!(
                    "round {t}: change to ({}, {}) is not the current coordinate",
                    c.page, c.j
                )));
            }
            let ci = c.page as usize - 1;
            let before = obj.page_value(closed[ci] + cur[ci]);
            let after = obj.page_value(closed[ci] + c.x);
            if c.page == pt {
                start_offset_cost += after - before;
            } else {
                if c.x < cur[ci] {
                    return Err(PagingError::Parse(format!(
                        "round {t}: coordinate of page {} decreased",
                        c.page
                    )));
                }
                df_dyn += after - before;
            }
            cur[ci] = c.x;
        }
        let rhs = d.rhs[i];
        if rhs > 0 {
            let covered: f64 = seen.iter().filter(|&&p| p != pt).map(|&p| cur[p as usize - 1]).sum();
            let eps = (opts.eps_feas_scale * rhs as f64).max(opts.eps_feas_floor);
            feasibility.le(rhs as f64 - eps, covered, || format!("round {t}"));
        }
        let dl = rhs as f64 * round.y - round.dz;
        let bound = 2.0 / r * dl;
        let tol = opts.rel_tol * df_dyn.abs().max(bound.abs()).max(1.0);
        rate.le(df_dyn, bound + tol, || format!("round {t}"));
    }
    for v in &rec.vars {
        if v.j == occ[v.page as usize - 1] && v.x != cur[v.page as usize - 1] {
            return Err(PagingError::Parse(format!(
                "final value of ({}, {}) disagrees with its last change",
                v.page, v.j
            )));
        }
    }

    let mut dual_slack = CheckResult::new("dual_slack");
    let mut x_lower_bound = CheckResult::new("x_lower_bound");
    for v in &rec.vars {
        let w = d.window_y(v.page, v.j) - v.z;
        let label = || format!("coordinate ({}, {})", v.page, v.j);
        dual_slack.le(w, r / v.s_min * ln_k1 + opts.slack_tol, label);
        let implied = ((v.s_min / r * w).exp() - 1.0) / k;
        x_lower_bound.le(implied - opts.xlb_tol * k, v.x, label);
    }

    let mut weak_duality = CheckResult::new("weak_duality");
    if cert.is_usable() {
        let tol = opts.rel_tol * cert.primal.abs().max(1.0);
        weak_duality.le(cert.dual, cert.primal + tol, || "D(y,z) <= f(x)".into());
    } else {
        weak_duality.le(1.0, 0.0, || "dual unusable (conjugate diverged)".into());
    }

    let mut ratio_bound = CheckResult::new("ratio_bound");
    if cert.dual > 1e-9 {
        let dynamic = cert.primal - start_offset_cost;
        ratio_bound.le(dynamic, cert.bound * cert.dual * (1.0 + opts.rel_tol), || {
            "f(x) <= bound * D".into()
        });
    }

    let mut conjugate_bound = CheckResult::new("conjugate_bound");
    if obj.is_linear() {
        conjugate_bound.le(cert.dual_conjugate, 0.0, || "f*(A^T y - z) = 0".into());
    } else {
        let q = obj.q();
        let limit = h.delta.powf(q / (q - 1.0)) * (q - 1.0) * cert.primal;
        conjugate_bound.le(cert.dual_conjugate, limit * (1.0 + opts.rel_tol) + opts.rel_tol, || {
            "f*(A^T y - z) <= delta^(q/(q-1)) (q-1) f(x)".into()
        });
    }

    Ok(CertificateReport {
        certificate: cert,
        feasibility,
        dual_slack,
        x_lower_bound,
        weak_duality,
        rate,
        ratio_bound,
        conjugate_bound,
        start_offset_cost,
    })
}
