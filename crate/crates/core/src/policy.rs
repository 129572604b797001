//! Online paging policies behind a common interface.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PagingError, Result};
use crate::fractional::FractionalSolver;
use crate::objective::{Objective, SolverParams};
use crate::rounding::DeterministicRounder;
use crate::schedule::{Schedule, ScheduleStep};
use crate::trace::{CostVector, PageId, RequestTrace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ServeOutcome {
    pub fault: bool,
    pub evicted: Option<PageId>,
}

/// An online paging algorithm with a cache of `capacity()` slots over pages
/// `1..=pages()`.
pub trait OnlinePolicy: Send {
    fn name(&self) -> String;
    fn capacity(&self) -> usize;
    fn pages(&self) -> usize;
    /// Serves a request; the page is cached afterwards.
    fn serve(&mut self, page: PageId) -> Result<ServeOutcome>;
    fn contains(&self, page: PageId) -> bool;
    /// Cached pages in increasing order.
    fn cache(&self) -> Vec<PageId>;
    /// Faults per page, indexed by `page - 1`.
    fn faults(&self) -> &[u64];

    fn fault_vector(&self) -> CostVector {
        CostVector::from_counts(self.faults())
    }
}

/// Cache contents and fault counters shared by the policies.
#[derive(Clone, Debug)]
struct Slots {
    k: usize,
    cache: Vec<PageId>,
    faults: Vec<u64>,
}

impl Slots {
    fn new(k: usize, pages: usize) -> Result<Self> {
        if k == 0 {
            return Err(PagingError::Domain("cache capacity must be at least 1".into()));
        }
        if pages == 0 {
            return Err(PagingError::Domain("page universe must be non-empty".into()));
        }
        Ok(Self {
            k,
            cache: Vec::with_capacity(k + 1),
            faults: vec![0; pages],
        })
    }

    fn check(&self, page: PageId) -> Result<()> {
        if page == 0 || page as usize > self.faults.len() {
            return Err(PagingError::PageOutOfRange {
                page: page as u64,
                n: self.faults.len(),
            });
        }
        Ok(())
    }

    /// Serves `page`, calling `victim` with the full cache to pick the index
    /// to evict.
    fn serve(&mut self, page: PageId, victim: impl FnOnce(&[PageId]) -> usize) -> Result<ServeOutcome> {
        self.check(page)?;
        if self.cache.contains(&page) {
            return Ok(ServeOutcome::default());
        }
        self.faults[page as usize - 1] += 1;
        let evicted = if self.cache.len() >= self.k {
            let at = victim(&self.cache);
            Some(self.cache.swap_remove(at))
        } else {
            None
        };
        self.cache.push(page);
        Ok(ServeOutcome { fault: true, evicted })
    }

    fn sorted(&self) -> Vec<PageId> {
        let mut c = self.cache.clone();
        c.sort_unstable();
        c
    }
}

/// Index of the cached page minimizing `key`.
fn argmin_by_key<K: Ord>(cache: &[PageId], key: impl Fn(PageId) -> K) -> usize {
    (0..cache.len())
        .min_by_key(|&i| key(cache[i]))
        .expect("full cache is non-empty")
}

macro_rules! delegate_slots {
    () => {
        fn capacity(&self) -> usize {
            self.slots.k
        }
        fn pages(&self) -> usize {
            self.slots.faults.len()
        }
        fn contains(&self, page: PageId) -> bool {
            self.slots.cache.contains(&page)
        }
        fn cache(&self) -> Vec<PageId> {
            self.slots.sorted()
        }
        fn faults(&self) -> &[u64] {
            &self.slots.faults
        }
    };
}

/// Least recently used.
#[derive(Clone, Debug)]
pub struct Lru {
    slots: Slots,
    last_used: Vec<u64>,
    clock: u64,
}

impl Lru {
    pub fn new(k: usize, pages: usize) -> Result<Self> {
        Ok(Self {
            slots: Slots::new(k, pages)?,
            last_used: vec![0; pages],
            clock: 0,
        })
    }
}

impl OnlinePolicy for Lru {
    fn name(&self) -> String {
        "lru".into()
    }

    fn serve(&mut self, page: PageId) -> Result<ServeOutcome> {
        let last = &self.last_used;
        let out = self.slots.serve(page, |c| argmin_by_key(c, |q| last[q as usize - 1]))?;
        self.clock += 1;
        self.last_used[page as usize - 1] = self.clock;
        Ok(out)
    }

    delegate_slots!();
}

/// First in, first out.
#[derive(Clone, Debug)]
pub struct Fifo {
    slots: Slots,
    loaded_at: Vec<u64>,
    clock: u64,
}

impl Fifo {
    pub fn new(k: usize, pages: usize) -> Result<Self> {
        Ok(Self {
            slots: Slots::new(k, pages)?,
            loaded_at: vec![0; pages],
            clock: 0,
        })
    }
}

impl OnlinePolicy for Fifo {
    fn name(&self) -> String {
        "fifo".into()
    }

    fn serve(&mut self, page: PageId) -> Result<ServeOutcome> {
        let loaded = &self.loaded_at;
        let out = self
            .slots
            .serve(page, |c| argmin_by_key(c, |q| loaded[q as usize - 1]))?;
        self.clock += 1;
        if out.fault {
            self.loaded_at[page as usize - 1] = self.clock;
        }
        Ok(out)
    }

    delegate_slots!();
}

/// Randomized marking: evicts a uniformly random unmarked page, starting a
/// new phase (unmarking everything) when all cached pages are marked.
#[derive(Clone, Debug)]
pub struct Marking {
    slots: Slots,
    marked: Vec<bool>,
    rng: ChaCha8Rng,
    seed: u64,
}

impl Marking {
    pub fn new(k: usize, pages: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            slots: Slots::new(k, pages)?,
            marked: vec![false; pages],
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        })
    }
}

impl OnlinePolicy for Marking {
    fn name(&self) -> String {
        format!("marking:{}", self.seed)
    }

    fn serve(&mut self, page: PageId) -> Result<ServeOutcome> {
        let (marked, rng) = (&mut self.marked, &mut self.rng);
        let out = self.slots.serve(page, |cache| {
            if cache.iter().all(|&q| marked[q as usize - 1]) {
                for &q in cache {
                    marked[q as usize - 1] = false;
                }
            }
            let mut unmarked: Vec<(PageId, usize)> = cache
                .iter()
                .enumerate()
                .filter(|(_, &q)| !marked[q as usize - 1])
                .map(|(i, &q)| (q, i))
                .collect();
            unmarked.sort_unstable();
            unmarked[rng.gen_range(0..unmarked.len())].1
        })?;
        if let Some(q) = out.evicted {
            self.marked[q as usize - 1] = false;
        }
        self.marked[page as usize - 1] = true;
        Ok(out)
    }

    delegate_slots!();
}

/// Keeps the pages with the most faults: evicts the cached page with the
/// fewest faults, then the least recently used, then the smallest id.
#[derive(Clone, Debug)]
pub struct GreedyMinFaults {
    slots: Slots,
    last_used: Vec<u64>,
    clock: u64,
}

impl GreedyMinFaults {
    pub fn new(k: usize, pages: usize) -> Result<Self> {
        Ok(Self {
            slots: Slots::new(k, pages)?,
            last_used: vec![0; pages],
            clock: 0,
        })
    }
}

impl OnlinePolicy for GreedyMinFaults {
    fn name(&self) -> String {
        "greedy-min-faults".into()
    }

    fn serve(&mut self, page: PageId) -> Result<ServeOutcome> {
        self.slots.check(page)?;
        let faults = self.slots.faults.clone();
        let last = &self.last_used;
        let out = self.slots.serve(page, |c| {
            argmin_by_key(c, |q| (faults[q as usize - 1], last[q as usize - 1], q))
        })?;
        self.clock += 1;
        self.last_used[page as usize - 1] = self.clock;
        Ok(out)
    }

    delegate_slots!();
}

/// Longest integration step used by the online fractional solver.
pub const ONLINE_MAX_STEP: f64 = 0.25;

/// Solver parameters for online use, where the horizon is unknown.
pub fn online_params(k: usize, q: f64) -> SolverParams {
    SolverParams::new(k, q).with_max_step(ONLINE_MAX_STEP)
}

/// The fractional solver run online, one round per request, with the
/// threshold rounding on top.
pub struct RoundedFractional {
    solver: FractionalSolver,
    rounder: DeterministicRounder,
    pages: usize,
}

impl RoundedFractional {
    pub fn new(k: usize, pages: usize, obj: Objective, params: SolverParams) -> Result<Self> {
        Ok(Self {
            solver: FractionalSolver::new(k, pages, obj, params)?,
            rounder: DeterministicRounder::new(k, pages),
            pages,
        })
    }

    /// The min-max objective with online parameters.
    pub fn minmax(k: usize, pages: usize) -> Result<Self> {
        let obj = Objective::minmax(pages);
        Self::new(k, pages, obj, online_params(k, obj.q()))
    }

    pub fn solver(&self) -> &FractionalSolver {
        &self.solver
    }
}

impl OnlinePolicy for RoundedFractional {
    fn name(&self) -> String {
        "minmax-pd".into()
    }

    fn capacity(&self) -> usize {
        self.solver.k()
    }

    fn pages(&self) -> usize {
        self.pages
    }

    fn serve(&mut self, page: PageId) -> Result<ServeOutcome> {
        let outcome = self.solver.push_request(page)?;
        let tol = 2.0 * outcome.eps_feas;
        let solver = &self.solver;
        let (fault, evicted) = self.rounder.serve(outcome.round, page, tol, |q| solver.current_x(q))?;
        let threshold = 1.0 / solver.k() as f64 - tol;
        if let Some(&p) = solver
            .unsaturated()
            .iter()
            .find(|&&p| solver.current_x(p) < threshold && !self.rounder.contains(p))
        {
            return Err(PagingError::InvariantViolation {
                round: outcome.round,
                reason: format!("page {p} is below the 1/k threshold but not cached"),
            });
        }
        Ok(ServeOutcome { fault, evicted })
    }

    fn contains(&self, page: PageId) -> bool {
        self.rounder.contains(page)
    }

    fn cache(&self) -> Vec<PageId> {
        self.rounder.cache_sorted()
    }

    fn faults(&self) -> &[u64] {
        self.rounder.faults()
    }
}

/// A policy selection string: `lru`, `fifo`, `marking:<seed>`,
/// `greedy-min-faults` or `minmax-pd`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    Lru,
    Fifo,
    Marking(u64),
    GreedyMinFaults,
    MinmaxPd,
}

impl PolicySpec {
    pub fn build(self, k: usize, pages: usize) -> Result<Box<dyn OnlinePolicy>> {
        Ok(match self {
            Self::Lru => Box::new(Lru::new(k, pages)?),
            Self::Fifo => Box::new(Fifo::new(k, pages)?),
            Self::Marking(seed) => Box::new(Marking::new(k, pages, seed)?),
            Self::GreedyMinFaults => Box::new(GreedyMinFaults::new(k, pages)?),
            Self::MinmaxPd => Box::new(RoundedFractional::minmax(k, pages)?),
        })
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Self::Marking(_))
    }
}

impl FromStr for PolicySpec {
    type Err = PagingError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lru" => Self::Lru,
            "fifo" => Self::Fifo,
            "greedy-min-faults" => Self::GreedyMinFaults,
            "minmax-pd" => Self::MinmaxPd,
            _ => match s.strip_prefix("marking:") {
                Some(seed) => Self::Marking(
                    seed.parse()
                        .map_err(|_| PagingError::UnknownPolicy(format!("{s}: seed must be an unsigned integer")))?,
                ),
                None => return Err(PagingError::UnknownPolicy(s.to_string())),
            },
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lru => f.write_str("lru"),
            Self::Fifo => f.write_str("fifo"),
            Self::Marking(seed) => write!(f, "marking:{seed}"),
            Self::GreedyMinFaults => f.write_str("greedy-min-faults"),
            Self::MinmaxPd => f.write_str("minmax-pd"),
        }
    }
}

/// Serves a whole trace and returns the validated schedule.
pub fn run_policy(policy: &mut dyn OnlinePolicy, trace: &RequestTrace) -> Result<Schedule> {
    if policy.capacity() != trace.k() || policy.pages() < trace.pages() {
        return Err(PagingError::Interface(format!(
            "policy with capacity {} over {} pages cannot serve a trace with k={} n={}",
            policy.capacity(),
            policy.pages(),
            trace.k(),
            trace.pages()
        )));
    }
    let mut steps = Vec::with_capacity(trace.len());
    for &p in trace.requests() {
        let out = policy.serve(p)?;
        steps.push(ScheduleStep {
            fault: out.fault,
            evicted: out.evicted.into_iter().collect(),
        });
    }
    Schedule::from_steps(&policy.name(), trace, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(k: usize, n: usize) -> Vec<Box<dyn OnlinePolicy>> {
        ["lru", "fifo", "marking:3", "greedy-min-faults", "minmax-pd"]
            .iter()
            .map(|s| s.parse::<PolicySpec>().unwrap().build(k, n).unwrap())
            .collect()
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["lru", "fifo", "marking:17", "greedy-min-faults", "minmax-pd"] {
            assert_eq!(s.parse::<PolicySpec>().unwrap().to_string(), s);
        }
        assert!("belady".parse::<PolicySpec>().is_err());
        assert!("marking:x".parse::<PolicySpec>().is_err());
    }

    #[test]
    fn lru_and_fifo_differ() {
        let trace = RequestTrace::new(2, 3, vec![1, 2, 1, 3, 1]).unwrap();
        let lru = run_policy(&mut Lru::new(2, 3).unwrap(), &trace).unwrap();
        let fifo = run_policy(&mut Fifo::new(2, 3).unwrap(), &trace).unwrap();
        assert_eq!(lru.faults.values(), &[1.0, 1.0, 1.0]);
        assert_eq!(fifo.faults.values(), &[2.0, 1.0, 1.0]);
    }

    #[test]
    fn few_pages_fault_once() {
        let trace = RequestTrace::new(4, 3, vec![1, 2, 3, 2, 1, 3, 3, 1]).unwrap();
        for mut p in all(4, 3) {
            let s = run_policy(p.as_mut(), &trace).unwrap();
            assert_eq!(s.faults.values(), &[1.0, 1.0, 1.0], "{}", p.name());
        }
    }

    #[test]
    fn served_page_is_cached() {
        let reqs: Vec<PageId> = (0..400).map(|i| ((i * 13 + i / 7) % 7 + 1) as PageId).collect();
        for mut p in all(3, 7) {
            for &r in &reqs {
                p.serve(r).unwrap();
                assert!(p.contains(r));
                assert!(p.cache().len() <= 3);
            }
        }
    }

    #[test]
    fn greedy_min_faults_keeps_heavy_pages() {
        let mut g = GreedyMinFaults::new(2, 3).unwrap();
        for p in [1, 2, 3, 1, 2] {
            g.serve(p).unwrap();
        }
        // page 1 and 2 hold the counts; page 3 (one fault) is evicted next
        assert!(!g.serve(1).unwrap().fault);
        assert_eq!(g.faults(), &[2, 2, 1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Lru::new(0, 3).is_err());
        let mut l = Lru::new(1, 3).unwrap();
        assert!(l.serve(4).is_err());
        assert!(l.serve(0).is_err());
    }
}
