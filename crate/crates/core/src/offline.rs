//! Offline reference algorithms: GreedyLFD, Belady, an exact min-max search
//! for tiny traces and the clairvoyant strategy for layered traces.

use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};
use crate::schedule::{Schedule, ScheduleStep};
use crate::trace::{CostVector, PageId, RequestTrace};

const NEVER: usize = usize::MAX;

/// Index of the next request to the same page, `NEVER` if none.
fn next_uses(requests: &[PageId], pages: usize) -> Vec<usize> {
    let mut last = vec![NEVER; pages + 1];
    let mut next = vec![NEVER; requests.len()];
    for (i, &p) in requests.iter().enumerate().rev() {
        next[i] = last[p as usize];
        last[p as usize] = i;
    }
    next
}

#[derive(Clone, Copy)]
enum Rule {
    Belady,
    GreedyLfd,
}

/// Farthest-in-future eviction with `slots` cache slots. GreedyLFD evicts a
/// page with no further request when there is one, and otherwise restricts
/// candidates to cached pages whose fault count is below the current maximum
/// over all pages.
fn farthest_in_future(requests: &[PageId], pages: usize, slots: usize, rule: Rule) -> (Vec<ScheduleStep>, Vec<u64>) {
    let next = next_uses(requests, pages);
    let mut faults = vec![0u64; pages];
    let mut max_faults = 0u64;
    // (page, index of its next request)
    let mut cache: Vec<(PageId, usize)> = Vec::with_capacity(slots);
    let mut steps = Vec::with_capacity(requests.len());
    for (i, &p) in requests.iter().enumerate() {
        if let Some(entry) = cache.iter_mut().find(|(q, _)| *q == p) {
            entry.1 = next[i];
            steps.push(ScheduleStep::default());
            continue;
        }
        let c = &mut faults[p as usize - 1];
        *c += 1;
        max_faults = max_faults.max(*c);
        if slots == 0 {
            steps.push(ScheduleStep {
                fault: true,
                evicted: Vec::new(),
            });
            continue;
        }
        let mut evicted = Vec::new();
        if cache.len() >= slots {
            let restrict = matches!(rule, Rule::GreedyLfd)
                && cache.iter().all(|(_, n)| *n != NEVER)
                && cache.iter().any(|(q, _)| faults[*q as usize - 1] < max_faults);
            let at = cache
                .iter()
                .enumerate()
                .filter(|(_, (q, _))| !restrict || faults[*q as usize - 1] < max_faults)
                .max_by(|(_, a), (_, b)| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(at, _)| at)
                .expect("full cache is non-empty");
            evicted.push(cache.swap_remove(at).0);
        }
        cache.push((p, next[i]));
        steps.push(ScheduleStep { fault: true, evicted });
    }
    (steps, faults)
}

/// GreedyLFD: an upper bound on the offline min-max optimum.
pub fn greedy_lfd(trace: &RequestTrace) -> Result<Schedule> {
    let (steps, _) = farthest_in_future(trace.requests(), trace.pages(), trace.k(), Rule::GreedyLfd);
    Schedule::from_steps("greedy-lfd", trace, steps)
}

/// Belady's farthest-in-future rule: minimizes total faults.
pub fn belady(trace: &RequestTrace) -> Result<Schedule> {
    let (steps, _) = farthest_in_future(trace.requests(), trace.pages(), trace.k(), Rule::Belady);
    Schedule::from_steps("belady", trace, steps)
}

/// Largest `k^(rounds that may force an eviction)` the exact search accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Exact offline min-max optimum by depth-first branch and bound over demand
/// paging schedules, seeded with the GreedyLFD value.
pub fn brute_force_minmax_opt(trace: &RequestTrace) -> Result<Schedule> {
    let k = trace.k();
    let mut seen = vec![false; trace.pages()];
    let mut distinct = 0usize;
    let mut branching = 0u32;
    for &p in trace.requests() {
        if !seen[p as usize - 1] {
            seen[p as usize - 1] = true;
            distinct += 1;
        }
        if distinct > k {
            branching += 1;
        }
    }
    let size = (k as f64).powi(branching as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(PagingError::SearchSpace(format!(
            "k^{branching} = {size:e} schedules exceeds the limit {BRUTE_FORCE_LIMIT:e}"
        )));
    }

    let incumbent = greedy_lfd(trace)?;
    let mut search = Search {
        requests: trace.requests(),
        k,
        faults: vec![0; trace.pages()],
        cache: Vec::with_capacity(k),
        path: Vec::with_capacity(trace.len()),
        best: incumbent.minmax() as u64,
        best_path: None,
    };
    search.dfs(0, 0);
    match search.best_path {
        Some(steps) => Schedule::from_steps("brute-force", trace, steps),
        None => {
            let mut s = incumbent;
            s.algorithm = "brute-force".into();
            Ok(s)
        }
    }
}

struct Search<'a> {
    requests: &'a [PageId],
    k: usize,
    faults: Vec<u64>,
    cache: Vec<PageId>,
    path: Vec<ScheduleStep>,
    best: u64,
    best_path: Option<Vec<ScheduleStep>>,
}

impl Search<'_> {
    fn dfs(&mut self, i: usize, max: u64) {
        if max >= self.best {
            return;
        }
        if i == self.requests.len() {
            self.best = max;
            self.best_path = Some(self.path.clone());
            return;
        }
        let p = self.requests[i];
        if self.cache.contains(&p) {
            self.path.push(ScheduleStep::default());
            self.dfs(i + 1, max);
            self.path.pop();
            return;
        }
        self.faults[p as usize - 1] += 1;
        let max = max.max(self.faults[p as usize - 1]);
        if self.cache.len() < self.k {
            self.cache.push(p);
            self.path.push(ScheduleStep {
                fault: true,
                evicted: Vec::new(),
            });
            self.dfs(i + 1, max);
            self.path.pop();
            self.cache.pop();
        } else {
            // try evicting pages needed later first: good schedules early prune more
            let mut order: Vec<(usize, PageId)> = self.cache.iter().map(|&q| (self.next_request(q, i), q)).collect();
            order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            for (_, q) in order {
                let at = self.cache.iter().position(|&c| c == q).expect("cached");
                self.cache[at] = p;
                self.path.push(ScheduleStep {
                    fault: true,
                    evicted: vec![q],
                });
                self.dfs(i + 1, max);
                self.path.pop();
                self.cache[at] = q;
            }
        }
        self.faults[p as usize - 1] -= 1;
    }

    fn next_request(&self, q: PageId, from: usize) -> usize {
        self.requests[from..]
            .iter()
            .position(|&r| r == q)
            .map_or(NEVER, |d| from + d)
    }
}

/// One phase of a layered construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseMeta {
    pub layer: usize,
    pub phase: usize,
    pub page_set: Vec<PageId>,
    pub promoted: PageId,
    /// Zero-based, half-open range of rounds.
    pub start: usize,
    pub end: usize,
}

/// Sidecar metadata of a layered trace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredMetadata {
    pub layers: usize,
    pub phases: Vec<PhaseMeta>,
}

impl LayeredMetadata {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PagingError::Metadata(e.to_string()))
    }

    pub fn read_from(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| PagingError::Metadata(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn write_to(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Final promoted page, if any phase exists.
    pub fn root(&self) -> Option<PageId> {
        self.phases.last().map(|p| p.promoted)
    }
}

/// Cost of the clairvoyant layered strategy: in every phase the promoted
/// page is pinned after its first fault and the other pages of the phase
/// are served by GreedyLFD on the remaining `k - 1` slots. Each phase starts
/// from an empty cache.
pub fn layered_offline_cost(trace: &RequestTrace, meta: &LayeredMetadata) -> Result<CostVector> {
    let mut costs = vec![0u64; trace.pages()];
    let mut covered = 0usize;
    for ph in &meta.phases {
        if ph.start > ph.end || ph.end > trace.len() {
            return Err(PagingError::Metadata(format!(
                "phase {}/{} spans rounds {}..{} of a {}-round trace",
                ph.layer,
                ph.phase,
                ph.start,
                ph.end,
                trace.len()
            )));
        }
        if ph.start != covered {
            return Err(PagingError::Metadata(format!(
                "phase {}/{} starts at {} but the previous phase ended at {covered}",
                ph.layer, ph.phase, ph.start
            )));
        }
        covered = ph.end;
        if !ph.page_set.contains(&ph.promoted) {
            return Err(PagingError::Metadata(format!(
                "phase {}/{} promotes page {} outside its page set",
                ph.layer, ph.phase, ph.promoted
            )));
        }
        let segment = &trace.requests()[ph.start..ph.end];
        if let Some(p) = segment.iter().find(|p| !ph.page_set.contains(p)) {
            return Err(PagingError::Metadata(format!(
                "phase {}/{} requests page {p} outside its page set",
                ph.layer, ph.phase
            )));
        }
        if segment.contains(&ph.promoted) {
            costs[ph.promoted as usize - 1] += 1;
        }
        let rest: Vec<PageId> = segment.iter().copied().filter(|&p| p != ph.promoted).collect();
        let (_, faults) = farthest_in_future(&rest, trace.pages(), trace.k() - 1, Rule::GreedyLfd);
        for (c, f) in costs.iter_mut().zip(faults) {
            *c += f;
        }
    }
    if covered != trace.len() {
        return Err(PagingError::Metadata(format!(
            "phases cover {covered} of {} rounds",
            trace.len()
        )));
    }
    Ok(CostVector::from_counts(&costs))
}

/// `2(T - 2k - 1) / (2k + k(k + 1)) + 2`: GreedyLFD's guarantee on traces
/// over `k + 1` pages.
pub fn lfd_bound(k: usize, len: usize) -> f64 {
    let k = k as f64;
    2.0 * (len as f64 - 2.0 * k - 1.0) / (2.0 * k + k * (k + 1.0)) + 2.0
}

/// `m + 2(N - 1)/(k - 1) + 2`: per-page cost of the layered strategy.
pub fn layered_bound(k: usize, m: usize, n_target: u64) -> f64 {
    m as f64 + 2.0 * (n_target as f64 - 1.0) / (k as f64 - 1.0) + 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(k: usize, n: usize, reqs: &[PageId]) -> RequestTrace {
        RequestTrace::new(k, n, reqs.to_vec()).unwrap()
    }

    #[test]
    fn small_examples() {
        let t = trace(2, 3, &[1, 2, 3, 1, 2, 3]);
        assert_eq!(greedy_lfd(&t).unwrap().minmax(), 2.0);
        assert_eq!(belady(&t).unwrap().total(), 4.0);
        assert_eq!(brute_force_minmax_opt(&t).unwrap().minmax(), 2.0);

        // page 2 holds the maximum but is never requested again
        let t = trace(2, 5, &[1, 2, 3, 1, 2, 1, 4, 5, 4, 5, 4, 5]);
        let s = greedy_lfd(&t).unwrap();
        assert_eq!(s.minmax(), 2.0);
        assert_eq!(s.faults.get(4) + s.faults.get(5), 2.0);

        let t = trace(1, 2, &[1, 2, 1, 2]);
        assert_eq!(brute_force_minmax_opt(&t).unwrap().minmax(), 2.0);

        let t = trace(3, 3, &[1, 2, 3, 3, 1, 2, 1]);
        assert_eq!(greedy_lfd(&t).unwrap().minmax(), 1.0);
        assert_eq!(belady(&t).unwrap().total(), 3.0);
        assert_eq!(brute_force_minmax_opt(&t).unwrap().minmax(), 1.0);
    }

    #[test]
    fn greedy_restricts_to_low_counters() {
        // at t=4 page 1 has the max count, so page 2 goes even though page 1 is needed later
        let t = trace(2, 3, &[1, 3, 1, 2, 1, 3, 3, 3, 2]);
        let s = greedy_lfd(&t).unwrap();
        assert!(s.minmax() <= 2.0);
    }

    #[test]
    fn search_space_guard() {
        let reqs: Vec<PageId> = (0..120).map(|i| (i % 5 + 1) as PageId).collect();
        let t = trace(3, 5, &reqs);
        assert!(matches!(brute_force_minmax_opt(&t), Err(PagingError::SearchSpace(_))));
    }

    #[test]
    fn layered_single_phase() {
        let t = trace(2, 3, &[1, 2, 3, 1]);
        let meta = LayeredMetadata {
            layers: 1,
            phases: vec![PhaseMeta {
                layer: 1,
                phase: 0,
                page_set: vec![1, 2, 3],
                promoted: 1,
                start: 0,
                end: 4,
            }],
        };
        let c = layered_offline_cost(&t, &meta).unwrap();
        assert_eq!(c.values(), &[1.0, 1.0, 1.0]);
        let mut bad = meta.clone();
        bad.phases[0].end = 3;
        assert!(layered_offline_cost(&t, &bad).is_err());
        assert!(layered_offline_cost(&t, &LayeredMetadata::default()).is_err());
    }
}
