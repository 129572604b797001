//! Request traces, the derived request index, and per-page cost vectors.
//!
//! Rounds are 1-based throughout the public API: round `t` serves
//! `requests()[t - 1]`. A request variable `(p, j)` is the eviction
//! variable opened by the `j`-th request to page `p`; it is created in round
//! `t(p, j)` and appears in constraint rows `t(p, j) + 1 ..= t(p, j + 1) - 1`
//! (or through the last round when `p` is never requested again).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};

/// Dense 1-based page identifier.
pub type PageId = u32;

const TRACE_MAGIC: &str = "paging-trace v1";

/// A request sequence together with the cache size and page universe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestTrace {
    k: usize,
    pages: usize,
    requests: Vec<PageId>,
}

impl RequestTrace {
    pub fn new(k: usize, pages: usize, requests: Vec<PageId>) -> Result<Self> {
        if k == 0 {
            return Err(PagingError::MalformedTrace("cache size k must be >= 1".into()));
        }
        if requests.is_empty() {
            return Err(PagingError::MalformedTrace("trace has no requests".into()));
        }
        if let Some(&bad) = requests.iter().find(|&&p| p == 0 || p as usize > pages) {
            return Err(PagingError::PageOutOfRange {
                page: bad as u64,
                n: pages,
            });
        }
        Ok(Self { k, pages, requests })
    }

    /// Builds a trace from arbitrary identifiers, relabelling them densely
    /// in order of first appearance.
    pub fn from_sparse_ids(k: usize, ids: &[u64]) -> Result<Self> {
        let mut map: HashMap<u64, PageId> = HashMap::new();
        let requests = ids
            .iter()
            .map(|id| {
                let next = map.len() as PageId + 1;
                *map.entry(*id).or_insert(next)
            })
            .collect();
        Self::new(k, map.len(), requests)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Size `n` of the page universe (ids live in `[1, n]`).
    pub fn pages(&self) -> usize {
        self.pages
    }

    pub fn requests(&self) -> &[PageId] {
        &self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Parses the `paging-trace v1` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| PagingError::MalformedTrace("empty input".into()))?;
        let (k, pages) = parse_header(header)?;
        let mut requests = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let id: u64 = line
                .parse()
                .map_err(|_| PagingError::MalformedTrace(format!("line {}: `{line}` is not a page id", lineno + 2)))?;
            if id == 0 || id > pages as u64 {
                return Err(PagingError::PageOutOfRange { page: id, n: pages });
            }
            requests.push(id as PageId);
        }
        Self::new(k, pages, requests)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.requests.len() * 4 + 32);
        let _ = writeln!(out, "{TRACE_MAGIC} k={} n={}", self.k, self.pages);
        for p in &self.requests {
            let _ = writeln!(out, "{p}");
        }
        out
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let rest = header
        .trim_end()
        .strip_prefix(TRACE_MAGIC)
        .ok_or_else(|| PagingError::MalformedTrace(format!("bad header `{header}`")))?;
    let fields: Vec<&str> = rest.split_whitespace().collect();
    match fields.as_slice() {
        [kf, nf] => {
            let k = kf
                .strip_prefix("k=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| PagingError::MalformedTrace(format!("bad k field `{kf}`")))?;
            let n = nf
                .strip_prefix("n=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| PagingError::MalformedTrace(format!("bad n field `{nf}`")))?;
            Ok((k, n))
        }
        _ => Err(PagingError::MalformedTrace(format!("bad header `{header}`"))),
    }
}

/// Derived maps `r(p, t)`, `t(p, j)` and `B(t)` over a trace.
#[derive(Clone, Debug)]
pub struct RequestIndex {
    k: usize,
    pages: usize,
    requests: Vec<PageId>,
    /// `occurrence[t-1] = r(p_t, t)`.
    occurrence: Vec<u32>,
    /// `request_rounds[p-1] = [t(p,1), t(p,2), ...]`.
    request_rounds: Vec<Vec<u32>>,
    /// `distinct[t-1] = |B(t)|`.
    distinct: Vec<u32>,
}

/// Row `t` of the implicit constraint matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintRowView {
    pub round: usize,
    /// Active variables `(p, r(p, t))` for `p` in `B(t) \ {p_t}`, sorted by page.
    pub active: Vec<(PageId, u32)>,
    /// `|B(t)| - k`; zero or negative during warm-up.
    pub rhs: i64,
}

impl ConstraintRowView {
    pub fn is_vacuous(&self) -> bool {
        self.rhs <= 0
    }
}

pub fn build_request_index(trace: &RequestTrace) -> Result<RequestIndex> {
    let mut request_rounds = vec![Vec::new(); trace.pages()];
    let mut occurrence = Vec::with_capacity(trace.len());
    let mut distinct = Vec::with_capacity(trace.len());
    let mut seen = 0u32;
    for (i, &p) in trace.requests().iter().enumerate() {
        if p == 0 || p as usize > trace.pages() {
            return Err(PagingError::PageOutOfRange {
                page: p as u64,
                n: trace.pages(),
            });
        }
        let slot = &mut request_rounds[p as usize - 1];
        if slot.is_empty() {
            seen += 1;
        }
        slot.push(i as u32 + 1);
        occurrence.push(slot.len() as u32);
        distinct.push(seen);
    }
    Ok(RequestIndex {
        k: trace.k(),
        pages: trace.pages(),
        requests: trace.requests().to_vec(),
        occurrence,
        request_rounds,
        distinct,
    })
}

impl RequestIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pages(&self) -> usize {
        self.pages
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// `p_t`.
    pub fn page_at(&self, t: usize) -> PageId {
        self.requests[t - 1]
    }

    /// `r(p_t, t)`: which request of its page round `t` is.
    pub fn occurrence_at(&self, t: usize) -> u32 {
        self.occurrence[t - 1]
    }

    /// `r(p, t)`: number of requests to `p` in rounds `1..=t`.
    pub fn r(&self, p: PageId, t: usize) -> u32 {
        match self.rounds_of(p) {
            Some(rounds) => rounds.partition_point(|&s| s as usize <= t) as u32,
            None => 0,
        }
    }

    /// `t(p, j)`, the round of the `j`-th request to `p`.
    pub fn t(&self, p: PageId, j: u32) -> Option<usize> {
        if j == 0 {
            return None;
        }
        self.rounds_of(p)?.get(j as usize - 1).map(|&s| s as usize)
    }

    pub fn rounds_of(&self, p: PageId) -> Option<&[u32]> {
        if p == 0 {
            return None;
        }
        self.request_rounds.get(p as usize - 1).map(Vec::as_slice)
    }

    /// `|B(t)|`.
    pub fn b_size(&self, t: usize) -> usize {
        if t == 0 {
            0
        } else {
            self.distinct[t - 1] as usize
        }
    }

    /// `B(t)`, sorted.
    pub fn b_set(&self, t: usize) -> Vec<PageId> {
        self.request_rounds
            .iter()
            .enumerate()
            .filter(|(_, rounds)| rounds.first().is_some_and(|&s| s as usize <= t))
            .map(|(i, _)| i as PageId + 1)
            .collect()
    }

    pub fn distinct_pages(&self) -> usize {
        self.b_size(self.len())
    }

    /// Rounds in which column `(p, j)` is active, as an inclusive range
    /// `t(p,j)+1 ..= t(p,j+1)-1`; empty when `p` is requested again at once.
    pub fn column_interval(&self, p: PageId, j: u32) -> Option<std::ops::RangeInclusive<usize>> {
        let start = self.t(p, j)? + 1;
        let end = self.t(p, j + 1).map_or(self.len(), |next| next - 1);
        Some(start..=end)
    }

    pub fn constraint_row(&self, t: usize) -> Result<ConstraintRowView> {
        if t == 0 || t > self.len() {
            return Err(PagingError::RoundOutOfRange {
                round: t,
                len: self.len(),
            });
        }
        let pt = self.page_at(t);
        let active = self
            .b_set(t)
            .into_iter()
            .filter(|&p| p != pt)
            .map(|p| (p, self.r(p, t)))
            .collect();
        Ok(ConstraintRowView {
            round: t,
            active,
            rhs: self.b_size(t) as i64 - self.k as i64,
        })
    }
}

/// Which event a schedule is charged for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    /// One unit per page fault (the page is fetched).
    Fetch,
    /// One unit per eviction (fractionally: per unit of evicted mass).
    Eviction,
}

impl std::fmt::Display for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CostModel::Fetch => "fetch",
            CostModel::Eviction => "eviction",
        })
    }
}

/// Per-page cost, indexed by `page - 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn zeros(pages: usize) -> Self {
        Self(vec![0.0; pages])
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(PagingError::Domain(format!(
                "cost entry {v} is not a nonnegative number"
            )));
        }
        Ok(Self(values))
    }

    pub fn from_counts(counts: &[u64]) -> Self {
        Self(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, page: PageId) -> f64 {
        self.0.get(page as usize - 1).copied().unwrap_or(0.0)
    }

    pub fn add(&mut self, page: PageId, amount: f64) {
        let i = page as usize - 1;
        if i >= self.0.len() {
            self.0.resize(i + 1, 0.0);
        }
        self.0[i] += amount;
    }

    /// Page with the largest cost (smallest id on ties).
    pub fn argmax(&self) -> Option<PageId> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.0.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i as PageId + 1)
    }

    pub fn minmax(&self) -> f64 {
        minmax_cost(&self.0)
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn lq(&self, q: f64) -> f64 {
        lq_cost(&self.0, q)
    }
}

/// Largest entry; zero for an empty vector.
pub fn minmax_cost(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

/// `(sum v_p^q)^(1/q)`; zero for an empty vector.
pub fn lq_cost(values: &[f64], q: f64) -> f64 {
    let top = minmax_cost(values);
    if top == 0.0 {
        return 0.0;
    }
    // scale by the max entry so large q does not overflow
    let s: f64 = values.iter().map(|v| (v / top).powf(q)).sum();
    top * s.powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(k: usize, reqs: &[PageId]) -> RequestTrace {
        let n = *reqs.iter().max().unwrap() as usize;
        RequestTrace::new(k, n, reqs.to_vec()).unwrap()
    }

    #[test]
    fn index_small_examples() {
        let idx = build_request_index(&trace(1, &[1, 2, 1])).unwrap();
        assert_eq!(idx.t(1, 1), Some(1));
        assert_eq!(idx.t(1, 2), Some(3));
        assert_eq!(idx.r(1, 3), 2);
        assert_eq!(idx.b_set(3), vec![1, 2]);

        let idx = build_request_index(&RequestTrace::new(3, 7, vec![7]).unwrap()).unwrap();
        assert_eq!(idx.b_set(1), vec![7]);
        assert_eq!(idx.r(7, 1), 1);

        let idx = build_request_index(&trace(2, &[1, 2, 3, 1, 2, 3])).unwrap();
        assert_eq!(idx.t(2, 2), Some(5));
        assert_eq!(idx.b_size(4), 3);
    }

    #[test]
    fn constraint_rows() {
        let idx = build_request_index(&trace(2, &[1, 2, 3])).unwrap();
        let row = idx.constraint_row(3).unwrap();
        assert_eq!(row.active, vec![(1, 1), (2, 1)]);
        assert_eq!(row.rhs, 1);
        assert_eq!(idx.constraint_row(2).unwrap().rhs, 0);
        assert!(idx.constraint_row(2).unwrap().is_vacuous());

        let idx = build_request_index(&trace(2, &[1, 2, 1, 3])).unwrap();
        let row = idx.constraint_row(4).unwrap();
        assert_eq!(row.active, vec![(1, 2), (2, 1)]);
        assert_eq!(row.rhs, 1);

        assert!(matches!(
            idx.constraint_row(5),
            Err(PagingError::RoundOutOfRange { round: 5, len: 4 })
        ));
        assert!(idx.constraint_row(0).is_err());
    }

    #[test]
    fn column_interval_matches_rows() {
        let idx = build_request_index(&trace(1, &[1, 1, 2, 1])).unwrap();
        // (1,1) is requested again immediately: never active
        assert!(idx.column_interval(1, 1).unwrap().is_empty());
        assert_eq!(idx.column_interval(1, 2).unwrap(), 3..=3);
        assert_eq!(idx.column_interval(2, 1).unwrap(), 4..=4);
        let last = idx.column_interval(1, 3).unwrap();
        assert_eq!((*last.start(), *last.end()), (5, 4));
    }

    #[test]
    fn cost_norms() {
        assert_eq!(minmax_cost(&[2.0, 1.0, 2.0]), 2.0);
        assert_eq!(lq_cost(&[2.0, 1.0, 2.0], 1.0), 5.0);
        assert!((lq_cost(&[3.0, 4.0], 2.0) - 5.0).abs() < 1e-12);
        assert_eq!(minmax_cost(&[]), 0.0);
        assert_eq!(lq_cost(&[], 2.0), 0.0);
    }

    #[test]
    fn parse_and_reject() {
        let t = RequestTrace::parse("paging-trace v1 k=2 n=3\n1\n3\n\n2\n").unwrap();
        assert_eq!(t.requests(), &[1, 3, 2]);
        assert_eq!(t.k(), 2);
        assert_eq!(RequestTrace::parse(&t.to_text()).unwrap(), t);

        assert!(matches!(
            RequestTrace::parse("paging-trace v1 k=2 n=3\n4\n"),
            Err(PagingError::PageOutOfRange { page: 4, n: 3 })
        ));
        assert!(RequestTrace::parse("paging-trace v1 k=2 n=3\n0\n").is_err());
        assert!(RequestTrace::parse("paging-trace v2 k=2 n=3\n1\n").is_err());
        assert!(RequestTrace::parse("paging-trace v1 k=2\n1\n").is_err());
        assert!(RequestTrace::parse("paging-trace v1 k=2 n=3\n").is_err());
        assert!(RequestTrace::parse("paging-trace v1 k=2 n=3\nx\n").is_err());
    }

    #[test]
    fn sparse_ids_are_remapped() {
        let t = RequestTrace::from_sparse_ids(2, &[100, 7, 100, 42]).unwrap();
        assert_eq!(t.requests(), &[1, 2, 1, 3]);
        assert_eq!(t.pages(), 3);
    }
}
