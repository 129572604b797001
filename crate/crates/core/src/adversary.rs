//! Adversarial request sequences: the cruel strategy, the layered lower-bound
//! constructions and the introductory bad examples for LRU and greedy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};
use crate::offline::{LayeredMetadata, PhaseMeta};
use crate::policy::OnlinePolicy;
use crate::trace::{PageId, RequestTrace};

/// Largest page universe the layered generators will build.
pub const MAX_LAYERED_PAGES: usize = 1 << 24;

/// Parameters of a layered construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredConfig {
    pub k: usize,
    /// Number of layers.
    pub m: usize,
    /// Per-phase fault target (deterministic) or request budget (randomized).
    #[serde(rename = "N")]
    pub n_target: u64,
    pub seed: u64,
}

impl LayeredConfig {
    pub fn new(k: usize, m: usize, n_target: u64) -> Self {
        Self {
            k,
            m,
            n_target,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `arity^m`, checked against `MAX_LAYERED_PAGES`.
    pub fn pages(&self, arity: usize) -> Result<usize> {
        if self.k == 0 {
            return Err(PagingError::Domain("k must be at least 1".into()));
        }
        if self.n_target == 0 {
            return Err(PagingError::Domain("N must be at least 1".into()));
        }
        u32::try_from(self.m)
            .ok()
            .and_then(|m| arity.checked_pow(m))
            .filter(|&n| n <= MAX_LAYERED_PAGES)
            .ok_or_else(|| PagingError::Domain(format!("{arity}^{} pages is too many", self.m)))
    }

    /// A note when `N` is small relative to the page count.
    pub fn warning(&self, pages: usize) -> Option<String> {
        (self.n_target < 10 * pages as u64).then(|| {
            format!(
                "N = {} is below 10 n = {}; the bounds are asymptotic in N",
                self.n_target,
                10 * pages
            )
        })
    }
}

/// A generated layered trace and its phase structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredTrace {
    pub k: usize,
    pub pages: usize,
    pub requests: Vec<PageId>,
    pub meta: LayeredMetadata,
}

impl LayeredTrace {
    /// The trace itself; fails for the empty trace of zero layers.
    pub fn trace(&self) -> Result<RequestTrace> {
        RequestTrace::new(self.k, self.pages, self.requests.clone())
    }

    pub fn root(&self) -> Option<PageId> {
        self.meta.root()
    }
}

/// When a cruel sequence stops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CruelStop {
    /// After this many requests in total.
    Length(usize),
    /// As soon as one page has this many faults after the warm-up.
    FaultTarget(u64),
}

/// Requests the smallest-id member of `set` missing from the policy's cache
/// and checks that it faulted.
fn request_absent(policy: &mut dyn OnlinePolicy, set: &[PageId], out: &mut Vec<PageId>) -> Result<PageId> {
    let cache = policy.cache();
    if cache.len() > policy.capacity() {
        return Err(PagingError::Interface(format!(
            "{} caches {} pages with capacity {}",
            policy.name(),
            cache.len(),
            policy.capacity()
        )));
    }
    let page = set
        .iter()
        .copied()
        .filter(|p| cache.binary_search(p).is_err())
        .min()
        .ok_or_else(|| {
            PagingError::Interface(format!(
                "{} caches all {} pages of the working set",
                policy.name(),
                set.len()
            ))
        })?;
    let served = policy.serve(page)?;
    if !served.fault || !policy.contains(page) {
        return Err(PagingError::Interface(format!(
            "{} did not fault in page {page}, which was absent",
            policy.name()
        )));
    }
    out.push(page);
    Ok(page)
}

fn check_policy(policy: &dyn OnlinePolicy, k: usize, pages: usize) -> Result<()> {
    if policy.capacity() != k || policy.pages() < pages {
        return Err(PagingError::Interface(format!(
            "{} has capacity {} over {} pages; the construction needs capacity {k} over {pages}",
            policy.name(),
            policy.capacity(),
            policy.pages()
        )));
    }
    Ok(())
}

/// The cruel strategy: always request the page of `set` that the policy does
/// not hold. `set` must have `capacity + 1` pages; the first `|set|` requests
/// form the warm-up.
pub fn cruel_sequence(policy: &mut dyn OnlinePolicy, set: &[PageId], stop: CruelStop) -> Result<Vec<PageId>> {
    if set.len() != policy.capacity() + 1 {
        return Err(PagingError::Domain(format!(
            "the working set needs k+1 = {} pages, got {}",
            policy.capacity() + 1,
            set.len()
        )));
    }
    if let Some(&p) = set.iter().find(|&&p| p == 0 || p as usize > policy.pages()) {
        return Err(PagingError::PageOutOfRange {
            page: p as u64,
            n: policy.pages(),
        });
    }
    let mut out = Vec::new();
    let mut base: Option<Vec<u64>> = None;
    loop {
        match stop {
            CruelStop::Length(len) if out.len() >= len => break,
            CruelStop::FaultTarget(target) => {
                if let Some(b) = &base {
                    let f = policy.faults();
                    if set.iter().any(|&p| f[p as usize - 1] - b[p as usize - 1] >= target) {
                        break;
                    }
                }
            }
            _ => {}
        }
        if let Some(&q) = policy.cache().iter().find(|q| !set.contains(q)) {
            return Err(PagingError::Interface(format!(
                "{} caches page {q} outside the working set",
                policy.name()
            )));
        }
        request_absent(policy, set, &mut out)?;
        if out.len() == set.len() {
            base = Some(policy.faults().to_vec());
        }
    }
    Ok(out)
}

/// Layer page lists are promoted in order, so block `i` of layer `l` holds
/// `pages[arity*i .. arity*(i+1)]`.
fn layered<F>(cfg: &LayeredConfig, arity: usize, mut phase: F) -> Result<LayeredTrace>
where
    F: FnMut(&[PageId], &mut Vec<PageId>) -> Result<PageId>,
{
    let n = cfg.pages(arity)?;
    let mut layer: Vec<PageId> = (1..=n as PageId).collect();
    let mut requests = Vec::new();
    let mut meta = LayeredMetadata {
        layers: cfg.m,
        phases: Vec::new(),
    };
    for l in (1..=cfg.m).rev() {
        let mut next = Vec::with_capacity(layer.len() / arity);
        for (i, block) in layer.chunks(arity).enumerate() {
            let start = requests.len();
            let promoted = phase(block, &mut requests)?;
            meta.phases.push(PhaseMeta {
                layer: l,
                phase: i,
                page_set: block.to_vec(),
                promoted,
                start,
                end: requests.len(),
            });
            next.push(promoted);
        }
        layer = next;
    }
    Ok(LayeredTrace {
        k: cfg.k,
        pages: n,
        requests,
        meta,
    })
}

/// Deterministic layered construction against an online policy: in every
/// phase the cruel strategy runs on one block of `k + 1` pages until a page
/// has `N` faults in that phase, and that page is promoted.
pub fn det_layered(policy: &mut dyn OnlinePolicy, cfg: &LayeredConfig) -> Result<LayeredTrace> {
    let n = cfg.pages(cfg.k + 1)?;
    check_policy(policy, cfg.k, n)?;
    layered(cfg, cfg.k + 1, |block, out| {
        let base: Vec<u64> = block.iter().map(|&p| policy.faults()[p as usize - 1]).collect();
        loop {
            let p = request_absent(policy, block, out)?;
            let at = block.iter().position(|&q| q == p).expect("requested from block");
            if policy.faults()[p as usize - 1] - base[at] >= cfg.n_target {
                return Ok(p);
            }
        }
    })
}

/// Oblivious construction for `k = 2`: each phase requests its three pages
/// round-robin `N` times, then promotes one of them uniformly at random.
pub fn rand_layered_k2(cfg: &LayeredConfig) -> Result<LayeredTrace> {
    if cfg.k != 2 {
        return Err(PagingError::Unsupported(format!(
            "the round-robin layered construction is defined for k = 2, got k = {}",
            cfg.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    layered(cfg, 3, |block, out| {
        for _ in 0..cfg.n_target {
            out.extend_from_slice(block);
        }
        Ok(block[rng.gen_range(0..block.len())])
    })
}

/// Oblivious construction with `N` uniform requests per phase over its
/// `k + 1` pages and a uniformly random promotion.
pub fn rand_layered_uniform(cfg: &LayeredConfig) -> Result<LayeredTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    layered(cfg, cfg.k + 1, |block, out| {
        for _ in 0..cfg.n_target {
            out.push(block[rng.gen_range(0..block.len())]);
        }
        Ok(block[rng.gen_range(0..block.len())])
    })
}

/// `p0, p1..pk, p0, pk+1..p2k, ..., p0` over `n = mk + 1` pages, with `p0`
/// as page 1.
pub fn intro_lru_bad(n: usize, k: usize) -> Result<RequestTrace> {
    if k == 0 || n == 0 || !(n - 1).is_multiple_of(k) {
        return Err(PagingError::Domain(format!(
            "need n = mk + 1 pages for k = {k}, got n = {n}"
        )));
    }
    let mut reqs = vec![1];
    for group in (2..=n as PageId).collect::<Vec<_>>().chunks(k) {
        reqs.extend_from_slice(group);
        reqs.push(1);
    }
    if n == 1 {
        reqs.push(1);
    }
    RequestTrace::new(k, n, reqs)
}

/// Pages used by `intro_greedy_bad` with the given repetitions.
pub fn intro_greedy_pages(repetitions: usize) -> usize {
    3 * (repetitions + 1)
}

/// The greedy counter-example for `k = 2`: `(p1 p2 p3)^N`, then per
/// repetition the two new pages alternate until the policy holds both,
/// followed by `(a b c)^N` with a third new page. The alternation gives up
/// after `cap` requests.
pub fn intro_greedy_bad(
    policy: &mut dyn OnlinePolicy,
    n_target: u64,
    repetitions: usize,
    cap: usize,
) -> Result<RequestTrace> {
    let pages = intro_greedy_pages(repetitions);
    check_policy(policy, 2, pages)?;
    let mut reqs = Vec::new();
    let mut emit = |policy: &mut dyn OnlinePolicy, p: PageId| -> Result<()> {
        policy.serve(p)?;
        reqs.push(p);
        Ok(())
    };
    for _ in 0..n_target {
        for p in 1..=3 {
            emit(policy, p)?;
        }
    }
    for r in 1..=repetitions as PageId {
        let (a, b, c) = (3 * r + 1, 3 * r + 2, 3 * r + 3);
        for i in 0..cap {
            if policy.contains(a) && policy.contains(b) {
                break;
            }
            emit(policy, if i % 2 == 0 { a } else { b })?;
        }
        for _ in 0..n_target {
            for p in [a, b, c] {
                emit(policy, p)?;
            }
        }
    }
    RequestTrace::new(2, pages, reqs)
}

/// `len` requests drawn uniformly from `n` pages.
pub fn uniform_random(k: usize, n: usize, len: usize, seed: u64) -> Result<RequestTrace> {
    if n == 0 {
        return Err(PagingError::Domain("page universe must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RequestTrace::new(k, n, (0..len).map(|_| rng.gen_range(1..=n as PageId)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offline::layered_offline_cost;
    use crate::policy::{Lru, Marking};

    #[test]
    fn cruel_faults_every_request() {
        let mut lru = Lru::new(2, 3).unwrap();
        let seq = cruel_sequence(&mut lru, &[1, 2, 3], CruelStop::Length(30)).unwrap();
        assert_eq!(seq.len(), 30);
        assert_eq!(lru.faults().iter().sum::<u64>(), 30);
        assert!(lru.faults().iter().any(|&f| f >= 10));

        let mut lru = Lru::new(2, 3).unwrap();
        let seq = cruel_sequence(&mut lru, &[1, 2, 3], CruelStop::FaultTarget(1)).unwrap();
        assert_eq!(seq.len(), 4);
    }

    #[test]
    fn cruel_depends_on_policy() {
        let mut lru = Lru::new(2, 3).unwrap();
        let a = cruel_sequence(&mut lru, &[1, 2, 3], CruelStop::Length(12)).unwrap();
        let differs = (0..8).any(|seed| {
            let mut marking = Marking::new(2, 3, seed).unwrap();
            let b = cruel_sequence(&mut marking, &[1, 2, 3], CruelStop::Length(12)).unwrap();
            assert_eq!(marking.faults().iter().sum::<u64>(), 12);
            a != b
        });
        assert!(differs);
    }

    #[test]
    fn det_layered_small() {
        let mut lru = Lru::new(2, 3).unwrap();
        let lt = det_layered(&mut lru, &LayeredConfig::new(2, 1, 5)).unwrap();
        let root = lt.root().unwrap();
        assert_eq!(lru.faults()[root as usize - 1], 5);
        assert!(lt.requests.len() <= 3 * 5);
        assert_eq!(lt.meta.phases.len(), 1);

        let mut lru = Lru::new(2, 1).unwrap();
        let lt = det_layered(&mut lru, &LayeredConfig::new(2, 0, 5)).unwrap();
        assert!(lt.requests.is_empty());
        assert!(lt.trace().is_err());
    }

    #[test]
    fn det_layered_root_cost_is_m_n() {
        let cfg = LayeredConfig::new(2, 3, 40);
        let mut lru = Lru::new(2, 27).unwrap();
        let lt = det_layered(&mut lru, &cfg).unwrap();
        assert_eq!(lru.faults()[lt.root().unwrap() as usize - 1], 120);
        assert_eq!(lt.meta.phases.len(), 9 + 3 + 1);
        let offline = layered_offline_cost(&lt.trace().unwrap(), &lt.meta).unwrap();
        assert!(offline.minmax() <= crate::offline::layered_bound(2, 3, 40));
    }

    #[test]
    fn rand_layered_shapes() {
        let lt = rand_layered_k2(&LayeredConfig::new(2, 1, 4).with_seed(9)).unwrap();
        assert_eq!(lt.requests, [1, 2, 3].repeat(4));
        assert!(rand_layered_k2(&LayeredConfig::new(3, 1, 4)).is_err());

        let cfg = LayeredConfig::new(2, 1, 10).with_seed(4);
        let a = rand_layered_uniform(&cfg).unwrap();
        assert_eq!(a.requests.len(), 10);
        assert!(a.requests.iter().all(|p| (1..=3).contains(p)));
        assert_eq!(a, rand_layered_uniform(&cfg).unwrap());
    }

    #[test]
    fn intro_sequences() {
        let t = intro_lru_bad(7, 2).unwrap();
        assert_eq!(t.requests(), &[1, 2, 3, 1, 4, 5, 1, 6, 7, 1]);
        assert!(intro_lru_bad(6, 2).is_err());

        let mut g = Lru::new(2, 3).unwrap();
        let t = intro_greedy_bad(&mut g, 4, 0, 100).unwrap();
        assert_eq!(t.requests(), [1, 2, 3].repeat(4).as_slice());

        let mut g = crate::policy::GreedyMinFaults::new(2, intro_greedy_pages(3)).unwrap();
        let t = intro_greedy_bad(&mut g, 50, 3, 100_000).unwrap();
        // each repetition lifts the maximum by N/2
        assert_eq!(g.fault_vector().minmax(), 125.0);
        assert!(crate::offline::greedy_lfd(&t).unwrap().minmax() <= 51.0);
    }
}
