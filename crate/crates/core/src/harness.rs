//! Experiment drivers behind the command-line tool: policy runs, fractional
//! solves, rounding, certificate checks, adversarial duels and benchmark
//! suites, all reported as `ExperimentReport`s or CSV rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adversary::{
    cruel_sequence, det_layered, intro_greedy_bad, intro_greedy_pages, intro_lru_bad, rand_layered_k2,
    rand_layered_uniform, uniform_random, CruelStop, LayeredConfig,
};
use crate::error::{PagingError, Result};
use crate::fractional::{
    certify, run_fractional, CertificateReport, CertifyOptions, DualCertificate, FractionalRecord,
};
use crate::objective::{certified_bound, minmax_bound, Objective, SolverParams};
use crate::offline::{
    brute_force_minmax_opt, greedy_lfd, layered_bound, layered_offline_cost, lfd_bound, LayeredMetadata,
};
use crate::policy::{run_policy, OnlinePolicy, PolicySpec, RoundedFractional};
use crate::rounding::{check_discretization, discretize_quarter_k, round_deterministic, round_randomized};
use crate::schedule::Schedule;
use crate::trace::{CostVector, PageId, RequestTrace};

/// Slack applied to asymptotic ratio targets.
pub const DEFAULT_SLACK: f64 = 0.9;
/// Slack on Monte Carlo means.
pub const MC_SLACK: f64 = 0.95;
/// Environment variable capping the worker pool.
pub const WORKERS_ENV: &str = "MINMAX_PAGING_WORKERS";
/// Cap on the alternation step of the greedy counter-example, per `N`.
const GREEDY_ALTERNATION_CAP: usize = 64;

/// A thread pool sized by `MINMAX_PAGING_WORKERS` (all cores when unset).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .ok_or_else(|| PagingError::Parse(format!("{WORKERS_ENV}={v} is not a positive integer")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PagingError::Interface(format!("worker pool: {e}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub faults: Vec<f64>,
    pub minmax: f64,
    pub l1: f64,
}

impl CostSummary {
    pub fn new(name: &str, seed: Option<u64>, costs: &CostVector) -> Self {
        Self {
            name: name.to_string(),
            seed,
            faults: costs.values().to_vec(),
            minmax: costs.minmax(),
            l1: costs.l1(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Mean and standard error of a sampled quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub name: String,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(name: &str, xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = if n == 0 { 0.0 } else { xs.iter().sum::<f64>() / n as f64 };
        let stderr = if n < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / ((n - 1) * n) as f64).sqrt()
        };
        Self {
            name: name.to_string(),
            samples: n,
            mean,
            stderr,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Result of one command: configuration echo, costs, certificate values,
/// bounds, statistics and pass/fail checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub command: String,
    pub config: BTreeMap<String, Value>,
    #[serde(default)]
    pub algorithms: Vec<CostSummary>,
    #[serde(default)]
    pub offline: Vec<CostSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<DualCertificate>,
    #[serde(default)]
    pub bounds: BTreeMap<String, f64>,
    #[serde(default)]
    pub stats: Vec<Stat>,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub notes: Vec<String>,
    pub wall_ms: f64,
}

impl ExperimentReport {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: BTreeMap::new(),
            algorithms: Vec::new(),
            offline: Vec::new(),
            certificate: None,
            bounds: BTreeMap::new(),
            stats: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
            wall_ms: 0.0,
        }
    }

    fn echo(&mut self, key: &str, value: impl Serialize) {
        self.config
            .insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// True when every check passed.
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Cost rows: `kind,name,seed,minmax,l1`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,name,seed,minmax,l1\n");
        for (kind, list) in [("online", &self.algorithms), ("offline", &self.offline)] {
            for s in list {
                let seed = s.seed.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{kind},{},{seed},{},{}", csv_field(&s.name), s.minmax, s.l1);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.command);
        for (k, v) in &self.config {
            let _ = writeln!(out, "  {k} = {v}");
        }
        for (kind, list) in [("online", &self.algorithms), ("offline", &self.offline)] {
            for s in list {
                let seed = s.seed.map(|v| format!(" seed={v}")).unwrap_or_default();
                let _ = writeln!(out, "{kind} {}{seed}: minmax={} l1={}", s.name, s.minmax, s.l1);
            }
        }
        if let Some(c) = &self.certificate {
            let _ = writeln!(
                out,
                "certificate: primal={} dual={} ratio={} bound={}",
                c.primal, c.dual, c.ratio, c.bound
            );
        }
        for (k, v) in &self.bounds {
            let _ = writeln!(out, "bound {k} = {v}");
        }
        for s in &self.stats {
            let _ = writeln!(
                out,
                "stat {}: mean={} stderr={} min={} max={} (n={})",
                s.name, s.mean, s.stderr, s.min, s.max, s.samples
            );
        }
        for c in &self.checks {
            let _ = writeln!(out, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "wall {:.1} ms", self.wall_ms);
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Replays a trace through an online policy.
pub fn run_report(trace: &RequestTrace, spec: PolicySpec) -> Result<(ExperimentReport, Schedule)> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("run");
    report.echo("policy", spec.to_string());
    report.echo("k", trace.k());
    report.echo("n", trace.pages());
    report.echo("T", trace.len());
    let seed = match spec {
        PolicySpec::Marking(s) => Some(s),
        _ => None,
    };
    let schedule = if spec == PolicySpec::MinmaxPd {
        let mut policy = RoundedFractional::minmax(trace.k(), trace.pages())?;
        let schedule = run_policy(&mut policy, trace)?;
        let frac = policy.solver().costs();
        let k = trace.k() as f64;
        let worst = schedule
            .faults
            .values()
            .iter()
            .zip(frac.values())
            .map(|(&f, &x)| f - k * x - 1.0)
            .fold(f64::NEG_INFINITY, f64::max);
        report.offline.push(CostSummary::new("fractional", None, &frac));
        report.checks.push(Check::new(
            "faults-within-k-fractional-plus-one",
            worst <= 1e-6,
            format!("worst excess {worst:e}"),
        ));
        schedule
    } else {
        let mut policy = spec.build(trace.k(), trace.pages())?;
        run_policy(policy.as_mut(), trace)?
    };
    report
        .algorithms
        .push(CostSummary::new(&spec.to_string(), seed, &schedule.faults));
    report.wall_ms = elapsed_ms(start);
    Ok((report, schedule))
}

/// Runs the fractional solver and certifies the result. For min-max
/// objectives on traces small enough for exact search, also compares with
/// the integral optimum.
pub fn frac_report(
    trace: &RequestTrace,
    obj: Objective,
    params: SolverParams,
    opts: &CertifyOptions,
) -> Result<(ExperimentReport, FractionalRecord)> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("frac");
    report.echo("k", trace.k());
    report.echo("n", trace.pages());
    report.echo("T", trace.len());
    report.echo("q", obj.q());
    report.echo("params", params);
    let rec = run_fractional(trace, obj, params)?;
    let cert = certify(&rec, opts)?;
    report
        .algorithms
        .push(CostSummary::new("fractional", None, &rec.costs()));
    report
        .bounds
        .insert("certified".into(), certified_bound(trace.k(), obj.q()));
    push_certificate(&mut report, &cert);
    if obj == Objective::minmax(trace.pages()) {
        let bound = minmax_bound(trace.k(), trace.pages());
        report.bounds.insert("minmax".into(), bound);
        match brute_force_minmax_opt(trace) {
            Ok(opt) => {
                let frac = rec.costs().minmax();
                let limit = bound * opt.minmax() + 0.01;
                report.offline.push(CostSummary::new("brute-force", None, &opt.faults));
                report.checks.push(Check::new(
                    "minmax-vs-exact-opt",
                    frac <= limit,
                    format!("fractional {frac} <= {bound} * {} + 0.01 = {limit}", opt.minmax()),
                ));
            }
            Err(PagingError::SearchSpace(msg)) => report.notes.push(format!("no exact optimum: {msg}")),
            Err(e) => return Err(e),
        }
    }
    report.wall_ms = elapsed_ms(start);
    Ok((report, rec))
}

fn push_certificate(report: &mut ExperimentReport, cert: &CertificateReport) {
    report.certificate = Some(cert.certificate.clone());
    for c in cert.checks() {
        report.checks.push(Check::new(
            &c.name,
            c.pass,
            format!(
                "{} checked, {} violations, worst excess {:e}",
                c.checked, c.violations, c.worst_excess
            ),
        ));
    }
}

/// Re-checks a fractional dump.
pub fn certify_report(rec: &FractionalRecord, opts: &CertifyOptions) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("certify");
    report.echo("k", rec.header.k);
    report.echo("n", rec.header.pages);
    report.echo("T", rec.rounds.len());
    report.echo("q", rec.header.q);
    let cert = certify(rec, opts)?;
    push_certificate(&mut report, &cert);
    report.wall_ms = elapsed_ms(start);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RoundingMode {
    Deterministic,
    Randomized { beta: f64, seed: u64 },
    Discretize,
}

/// Rounds a fractional dump into an integral schedule (or a grid solution).
pub fn round_report(rec: &FractionalRecord, mode: RoundingMode) -> Result<(ExperimentReport, Option<Schedule>)> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("round");
    report.echo("k", rec.header.k);
    report.echo("n", rec.header.pages);
    report.echo("T", rec.rounds.len());
    report.offline.push(CostSummary::new("fractional", None, &rec.costs()));
    let schedule = match mode {
        RoundingMode::Deterministic => {
            report.echo("mode", "deterministic");
            let det = round_deterministic(rec)?;
            report
                .algorithms
                .push(CostSummary::new("deterministic-rounding", None, &det.schedule.faults));
            report.checks.push(Check::new(
                "threshold-invariant",
                det.max_required <= rec.header.k,
                format!(
                    "{} rounds, at most {} pages below 1/k",
                    det.rounds_checked, det.max_required
                ),
            ));
            report.checks.push(Check::new(
                "faults-within-k-fractional-plus-one",
                det.per_page_bound_ok,
                format!("worst excess {:e}", det.worst_page_excess),
            ));
            Some(det.schedule)
        }
        RoundingMode::Randomized { beta, seed } => {
            report.echo("mode", "randomized");
            report.echo("beta", beta);
            report.echo("seed", seed);
            let run = round_randomized(rec, beta, seed)?;
            report.algorithms.push(CostSummary::new(
                "randomized-rounding",
                Some(seed),
                &run.schedule.faults,
            ));
            report.notes.push(format!(
                "{} coin evictions, {} reset evictions",
                run.coin_evictions, run.reset_evictions
            ));
            Some(run.schedule)
        }
        RoundingMode::Discretize => {
            report.echo("mode", "discretize");
            let disc = discretize_quarter_k(rec);
            let rep = check_discretization(rec, &disc);
            report.bounds.insert("minmax_after".into(), rep.minmax_after);
            report
                .bounds
                .insert("max_coordinate_ratio".into(), rep.max_coordinate_ratio);
            report
                .checks
                .push(Check::new("on-grid", rep.on_grid, "numerators within 4k"));
            report.checks.push(Check::new(
                "feasible",
                rep.feasible,
                rep.first_infeasible_round
                    .map_or("every round covered".into(), |t| format!("round {t} uncovered")),
            ));
            report.checks.push(Check::new(
                "minmax-within-three",
                rep.within_three,
                format!("{} -> {}", rep.minmax_before, rep.minmax_after),
            ));
            None
        }
    };
    report.wall_ms = elapsed_ms(start);
    Ok((report, schedule))
}

/// A trace generator with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "adv", rename_all = "kebab-case")]
pub enum Generator {
    Cruel {
        k: usize,
        len: usize,
    },
    DetLayered {
        k: usize,
        m: usize,
        #[serde(rename = "N")]
        n_target: u64,
    },
    RandLayered {
        m: usize,
        #[serde(rename = "N")]
        n_target: u64,
    },
    RandUniform {
        k: usize,
        m: usize,
        #[serde(rename = "N")]
        n_target: u64,
    },
    IntroLru {
        k: usize,
        m: usize,
    },
    IntroGreedy {
        #[serde(rename = "N")]
        n_target: u64,
        reps: usize,
    },
    Uniform {
        k: usize,
        n: usize,
        len: usize,
    },
}

use Generator as Gen;

/// A generated trace; `requests` may be empty for degenerate configurations.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub k: usize,
    pub pages: usize,
    pub requests: Vec<PageId>,
    pub meta: Option<LayeredMetadata>,
    /// Costs of the policy that drove an adaptive generator.
    pub policy_costs: Option<CostVector>,
}

impl Generated {
    pub fn trace(&self) -> Result<RequestTrace> {
        RequestTrace::new(self.k, self.pages, self.requests.clone())
    }
}

impl Generator {
    pub fn k(&self) -> usize {
        match *self {
            Self::Cruel { k, .. }
            | Self::DetLayered { k, .. }
            | Self::RandUniform { k, .. }
            | Self::IntroLru { k, .. }
            | Self::Uniform { k, .. } => k,
            Self::RandLayered { .. } | Self::IntroGreedy { .. } => 2,
        }
    }

    pub fn pages(&self) -> Result<usize> {
        Ok(match *self {
            Self::Cruel { k, .. } => k + 1,
            Self::DetLayered { k, m, n_target } | Self::RandUniform { k, m, n_target } => {
                LayeredConfig::new(k, m, n_target).pages(k + 1)?
            }
            Self::RandLayered { m, n_target } => LayeredConfig::new(2, m, n_target).pages(3)?,
            Self::IntroLru { k, m } => m * k + 1,
            Self::IntroGreedy { reps, .. } => intro_greedy_pages(reps),
            Self::Uniform { n, .. } => n,
        })
    }

    /// Whether the trace depends on the policy it is generated against.
    pub fn is_adaptive(&self) -> bool {
        matches!(
            self,
            Self::Cruel { .. } | Self::DetLayered { .. } | Self::IntroGreedy { .. }
        )
    }

    /// Whether the seed changes the trace.
    pub fn is_seeded(&self) -> bool {
        matches!(
            self,
            Self::RandLayered { .. } | Self::RandUniform { .. } | Self::Uniform { .. }
        )
    }

    /// Generates a trace; adaptive generators drive `policy`, which must be
    /// fresh and sized by `k()` and `pages()`.
    pub fn generate(&self, policy: &mut dyn OnlinePolicy, seed: u64) -> Result<Generated> {
        let k = self.k();
        let pages = self.pages()?;
        let (requests, meta) = match *self {
            Self::Cruel { len, .. } => {
                let set: Vec<PageId> = (1..=pages as PageId).collect();
                (cruel_sequence(policy, &set, CruelStop::Length(len))?, None)
            }
            Self::DetLayered { m, n_target, .. } => {
                let lt = det_layered(policy, &LayeredConfig::new(k, m, n_target))?;
                (lt.requests, Some(lt.meta))
            }
            Self::RandLayered { m, n_target } => {
                let lt = rand_layered_k2(&LayeredConfig::new(2, m, n_target).with_seed(seed))?;
                (lt.requests, Some(lt.meta))
            }
            Self::RandUniform { m, n_target, .. } => {
                let lt = rand_layered_uniform(&LayeredConfig::new(k, m, n_target).with_seed(seed))?;
                (lt.requests, Some(lt.meta))
            }
            Self::IntroLru { m, .. } => (intro_lru_bad(m * k + 1, k)?.requests().to_vec(), None),
            Self::IntroGreedy { n_target, reps } => {
                let cap = GREEDY_ALTERNATION_CAP * (n_target as usize + 1) * (reps + 1);
                (intro_greedy_bad(policy, n_target, reps, cap)?.requests().to_vec(), None)
            }
            Self::Uniform { n, len, .. } => (uniform_random(k, n, len, seed)?.requests().to_vec(), None),
        };
        let policy_costs = self.is_adaptive().then(|| policy.fault_vector());
        Ok(Generated {
            k,
            pages,
            requests,
            meta,
            policy_costs,
        })
    }

    /// Ratio the policy is expected to reach (or exceed) against the offline
    /// reference, where one is known.
    pub fn target_ratio(&self) -> Option<f64> {
        match *self {
            Self::DetLayered { k, m, n_target } if m > 0 => {
                let (k, m, n) = (k as f64, m as f64, n_target as f64);
                Some((k - 1.0) * m * n / ((k - 1.0) * (m + 2.0) + 2.0 * (n - 1.0)))
            }
            Self::RandLayered { m, n_target } if m > 0 => {
                let (m, n) = (m as f64, n_target as f64);
                Some(m * n / (2.0 * (m + n)))
            }
            Self::Cruel { k, len } if len > 2 * k + 1 => Some(len as f64 / (k as f64 + 1.0) / lfd_bound(k, len)),
            Self::IntroLru { m, .. } => Some(m as f64 + 1.0),
            Self::IntroGreedy { .. } => Some(3.0),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cruel { .. } => "cruel",
            Self::DetLayered { .. } => "det-layered",
            Self::RandLayered { .. } => "rand-layered",
            Self::RandUniform { .. } => "rand-uniform",
            Self::IntroLru { .. } => "intro-lru",
            Self::IntroGreedy { .. } => "intro-greedy",
            Self::Uniform { .. } => "uniform",
        }
    }
}

/// One generated trace played against one policy.
#[derive(Clone, Debug, PartialEq)]
pub struct DuelOutcome {
    pub policy: String,
    pub seed: u64,
    pub k: usize,
    pub pages: usize,
    pub len: usize,
    pub policy_costs: CostVector,
    pub offline_name: &'static str,
    pub offline_costs: Option<CostVector>,
    /// Policy faults on the final promoted page of a layered trace.
    pub root_faults: Option<f64>,
    pub ratio: Option<f64>,
    pub target: Option<f64>,
    pub checks: Vec<Check>,
    pub degenerate: bool,
    pub runtime_ms: f64,
}

impl DuelOutcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Generates one trace against a fresh policy and compares it with the
/// offline reference (layered strategy when metadata exists, GreedyLFD
/// otherwise).
pub fn duel_once(gen: &Generator, spec: PolicySpec, seed: u64, slack: f64) -> Result<DuelOutcome> {
    let start = Instant::now();
    let k = gen.k();
    let pages = gen.pages()?;
    let mut policy = spec.build(k, pages)?;
    let generated = gen.generate(policy.as_mut(), seed)?;
    let mut out = DuelOutcome {
        policy: spec.to_string(),
        seed,
        k,
        pages,
        len: generated.requests.len(),
        policy_costs: CostVector::zeros(pages),
        offline_name: if generated.meta.is_some() {
            "layered-offline"
        } else {
            "greedy-lfd"
        },
        offline_costs: None,
        root_faults: None,
        ratio: None,
        target: gen.target_ratio(),
        checks: Vec::new(),
        degenerate: generated.requests.is_empty(),
        runtime_ms: 0.0,
    };
    if out.degenerate {
        out.runtime_ms = elapsed_ms(start);
        return Ok(out);
    }
    let trace = generated.trace()?;
    out.policy_costs = match generated.policy_costs {
        Some(c) => c,
        None => run_policy(policy.as_mut(), &trace)?.faults,
    };
    let offline = match &generated.meta {
        Some(meta) => layered_offline_cost(&trace, meta)?,
        None => greedy_lfd(&trace)?.faults,
    };
    let policy_max = out.policy_costs.minmax();
    let offline_max = offline.minmax();
    out.ratio = Some(policy_max / offline_max);
    let root = generated.meta.as_ref().and_then(|m| m.root());
    out.root_faults = root.map(|p| out.policy_costs.get(p));

    let ratio = policy_max / offline_max;
    match *gen {
        Gen::DetLayered { k, m, n_target } => {
            let root_faults = out.root_faults.unwrap_or(0.0);
            let want = (m as u64 * n_target) as f64;
            out.checks.push(Check::new(
                "root-faults-equal-mN",
                root_faults == want,
                format!("{root_faults} vs {want}"),
            ));
            let bound = layered_bound(k, m, n_target);
            out.checks.push(Check::new(
                "offline-within-layered-bound",
                offline_max <= bound,
                format!("{offline_max} <= {bound}"),
            ));
            let target = slack * out.target.unwrap_or(0.0);
            out.checks.push(Check::new(
                "ratio-at-least-target",
                ratio >= target,
                format!("{ratio} >= {target}"),
            ));
        }
        Gen::RandLayered { m, n_target } => {
            let bound = (m as u64 + n_target) as f64;
            out.checks.push(Check::new(
                "offline-at-most-m-plus-N",
                offline_max <= bound,
                format!("{offline_max} <= {bound}"),
            ));
        }
        Gen::Cruel { k, len } => {
            let total = out.policy_costs.l1();
            out.checks.push(Check::new(
                "every-request-faults",
                total == len as f64,
                format!("{total} faults in {len} requests"),
            ));
            if len > 2 * k {
                let bound = lfd_bound(k, len);
                out.checks.push(Check::new(
                    "greedy-lfd-within-bound",
                    offline_max <= bound,
                    format!("{offline_max} <= {bound}"),
                ));
            }
        }
        Gen::IntroLru { m, .. } => {
            out.checks.push(Check::new(
                "offline-faults-once",
                offline_max == 1.0,
                format!("offline minmax {offline_max}"),
            ));
            if spec == PolicySpec::Lru {
                let p0 = out.policy_costs.get(1);
                out.checks.push(Check::new(
                    "p0-faults-m-plus-one",
                    p0 == m as f64 + 1.0,
                    format!("{p0} vs {}", m + 1),
                ));
            }
        }
        Gen::IntroGreedy { .. } => {
            if spec == PolicySpec::GreedyMinFaults {
                out.checks
                    .push(Check::new("ratio-at-least-3", ratio >= 3.0, format!("{ratio}")));
            }
        }
        Gen::RandUniform { .. } | Gen::Uniform { .. } => {}
    }
    out.offline_costs = Some(offline);
    out.runtime_ms = elapsed_ms(start);
    Ok(out)
}

/// Plays a generator against a policy for every seed and aggregates.
pub fn duel_report(gen: &Generator, spec: PolicySpec, seeds: &[u64], slack: f64) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = ExperimentReport::new("duel");
    report.echo("generator", gen);
    report.echo("policy", spec.to_string());
    report.echo("seeds", seeds);
    report.echo("slack", slack);
    if let Some(w) = layered_config(gen).and_then(|(cfg, arity)| cfg.pages(arity).ok().and_then(|n| cfg.warning(n))) {
        report.notes.push(w);
    }
    let pool = worker_pool()?;
    let outcomes: Vec<DuelOutcome> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| duel_once(gen, spec, seed, slack))
            .collect::<Result<_>>()
    })?;
    if let Some(t) = gen.target_ratio() {
        report.bounds.insert("target_ratio".into(), t);
        report.bounds.insert("slack".into(), slack);
    }
    if outcomes.iter().any(|o| o.degenerate) {
        report
            .notes
            .push("degenerate configuration: empty trace, ratio undefined".into());
        report.checks.push(Check::new("non-degenerate", false, "empty trace"));
        report.wall_ms = elapsed_ms(start);
        return Ok(report);
    }
    let seeded = gen.is_seeded() || spec.is_randomized();
    for o in &outcomes {
        let seed = seeded.then_some(o.seed);
        report
            .algorithms
            .push(CostSummary::new(&o.policy, seed, &o.policy_costs));
        if let Some(off) = &o.offline_costs {
            report.offline.push(CostSummary::new(o.offline_name, seed, off));
        }
    }
    let ratios: Vec<f64> = outcomes.iter().filter_map(|o| o.ratio).collect();
    report.stats.push(Stat::of("ratio", &ratios));
    let roots: Vec<f64> = outcomes.iter().filter_map(|o| o.root_faults).collect();
    if !roots.is_empty() {
        report.stats.push(Stat::of("root_faults", &roots));
    }
    let offline_max: Vec<f64> = outcomes
        .iter()
        .filter_map(|o| o.offline_costs.as_ref().map(|c| c.minmax()))
        .collect();
    report.stats.push(Stat::of("offline_minmax", &offline_max));

    // per-seed checks, merged by name
    let mut merged: BTreeMap<String, (usize, usize, String)> = BTreeMap::new();
    for o in &outcomes {
        for c in &o.checks {
            let e = merged.entry(c.name.clone()).or_insert((0, 0, String::new()));
            e.0 += 1;
            if !c.pass {
                e.1 += 1;
                if e.2.is_empty() {
                    e.2 = format!("seed {}: {}", o.seed, c.detail);
                }
            }
        }
    }
    for (name, (n, failed, first)) in merged {
        let detail = if failed == 0 {
            format!("{n} of {n} seeds")
        } else {
            format!("{failed} of {n} seeds fail; {first}")
        };
        report.checks.push(Check::new(&name, failed == 0, detail));
    }
    if let Gen::RandLayered { m, n_target } = *gen {
        if m > 0 {
            let mean = Stat::of("root", &roots).mean;
            let want = MC_SLACK * (m as u64 * n_target) as f64 / 2.0;
            report.checks.push(Check::new(
                "mean-root-faults",
                mean >= want,
                format!("{mean} >= {MC_SLACK} * mN/2 = {want}"),
            ));
        }
    }
    report.wall_ms = elapsed_ms(start);
    Ok(report)
}

fn layered_config(gen: &Generator) -> Option<(LayeredConfig, usize)> {
    match *gen {
        Gen::DetLayered { k, m, n_target } | Gen::RandUniform { k, m, n_target } => {
            Some((LayeredConfig::new(k, m, n_target), k + 1))
        }
        Gen::RandLayered { m, n_target } => Some((LayeredConfig::new(2, m, n_target), 3)),
        _ => None,
    }
}

fn default_true() -> bool {
    true
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A benchmark suite file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub suite: String,
    /// When false, `runtime_ms` is written as 0 so that repeated runs give
    /// identical output.
    #[serde(default = "default_true")]
    pub record_runtime: bool,
    #[serde(default)]
    pub slack: Option<f64>,
    pub cases: Vec<BenchCase>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub case: String,
    #[serde(flatten)]
    pub generator: Generator,
    pub policies: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl BenchSuite {
    pub fn parse(text: &str) -> Result<Self> {
        let suite: Self = serde_json::from_str(text).map_err(|e| PagingError::Parse(format!("suite file: {e}")))?;
        for case in &suite.cases {
            for p in &case.policies {
                p.parse::<PolicySpec>()?;
            }
        }
        Ok(suite)
    }
}

/// One CSV row of a benchmark run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub suite: String,
    pub case: String,
    pub algorithm: String,
    pub k: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    pub minmax_cost: f64,
    pub l1_cost: f64,
    pub offline_minmax: Option<f64>,
    pub ratio: Option<f64>,
    pub bound: Option<f64>,
    pub pass: bool,
    pub runtime_ms: f64,
}

pub const BENCH_HEADER: &str =
    "suite,case,algorithm,k,n,T,seed,minmax_cost,l1_cost,offline_minmax,ratio,bound,pass,runtime_ms";

impl BenchRow {
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.suite),
            csv_field(&self.case),
            csv_field(&self.algorithm),
            self.k,
            self.n,
            self.t,
            self.seed,
            self.minmax_cost,
            self.l1_cost,
            opt(self.offline_minmax),
            opt(self.ratio),
            opt(self.bound),
            self.pass,
            self.runtime_ms
        )
    }
}

/// Runs every (case, policy, seed) cell on the worker pool; rows come back
/// in suite order.
pub fn run_bench(suite: &BenchSuite) -> Result<Vec<BenchRow>> {
    let slack = suite.slack.unwrap_or(DEFAULT_SLACK);
    let mut cells = Vec::new();
    for case in &suite.cases {
        for p in &case.policies {
            let spec: PolicySpec = p.parse()?;
            for &seed in &case.seeds {
                cells.push((case, spec, seed));
            }
        }
    }
    let pool = worker_pool()?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(case, spec, seed)| {
                let o = duel_once(&case.generator, spec, seed, slack)?;
                Ok(BenchRow {
                    suite: suite.suite.clone(),
                    case: case.case.clone(),
                    algorithm: o.policy.clone(),
                    k: o.k,
                    n: o.pages,
                    t: o.len,
                    seed,
                    minmax_cost: o.policy_costs.minmax(),
                    l1_cost: o.policy_costs.l1(),
                    offline_minmax: o.offline_costs.as_ref().map(|c| c.minmax()),
                    ratio: o.ratio,
                    bound: o.target,
                    pass: o.pass() && !o.degenerate,
                    runtime_ms: if suite.record_runtime { o.runtime_ms } else { 0.0 },
                })
            })
            .collect()
    })
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_json_round_trip() {
        let trace = RequestTrace::new(2, 5, vec![1, 2, 3, 4, 5, 1, 2, 3, 1, 4]).unwrap();
        let obj = Objective::minmax(5);
        let (report, _) = frac_report(
            &trace,
            obj,
            SolverParams::new(2, obj.q()).with_horizon(10),
            &CertifyOptions::default(),
        )
        .unwrap();
        assert!(report.pass(), "{}", report.to_text());
        let back = ExperimentReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn lru_on_intro_sequence() {
        let trace = intro_lru_bad(7, 2).unwrap();
        let (report, _) = run_report(&trace, PolicySpec::Lru).unwrap();
        assert_eq!(report.algorithms[0].minmax, 4.0);
    }

    #[test]
    fn degenerate_duel() {
        let gen = Generator::DetLayered {
            k: 2,
            m: 0,
            n_target: 5,
        };
        let report = duel_report(&gen, PolicySpec::Lru, &[0], DEFAULT_SLACK).unwrap();
        assert!(!report.pass());
        assert!(report.notes.iter().any(|n| n.contains("degenerate")));
    }

    #[test]
    fn suite_parsing() {
        let text = r#"{"suite": "s", "cases": [
            {"case": "a", "adv": "det-layered", "k": 2, "m": 1, "N": 5, "policies": ["lru"]},
            {"case": "b", "adv": "uniform", "k": 2, "n": 4, "len": 50, "policies": ["fifo", "marking:1"], "seeds": [1, 2]}
        ]}"#;
        let suite = BenchSuite::parse(text).unwrap();
        let rows = run_bench(&suite).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows[0].pass);
        assert!(BenchSuite::parse(r#"{"suite": "s", "cases": [{"case": "a", "adv": "uniform", "k": 2, "n": 4, "len": 5, "policies": ["opt"]}]}"#).is_err());
    }
}
