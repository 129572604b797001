use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PagingError, Result};
use crate::fractional::FractionalRecord;
use crate::schedule::{Schedule, ScheduleStep};
use crate::serde_finite;
use crate::trace::{CostVector, PageId, RequestTrace};

/// `4 ln(n k)`, at least 1.
pub fn default_beta(pages: usize, k: usize) -> f64 {
    (4.0 * ((pages * k) as f64).ln()).max(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomizedRun {
    pub seed: u64,
    pub beta: f64,
    pub schedule: Schedule,
    /// Per coordinate (in record order): whether its eviction coin came up
    /// between its request and the next one. Coins keep being drawn while the
    /// page is out of the cache, so each entry is Bernoulli with mean `y_{p,j}`.
    pub triggered: Vec<bool>,
    /// `y_{p,j}`: the scaled coordinate at the end of its window.
    pub y_final: Vec<f64>,
    /// Sum of `triggered` per page.
    pub coin_faults: CostVector,
    pub coin_evictions: u64,
    pub reset_evictions: u64,
}

/// Scaled randomized rounding: each cached page `p != p_t` is evicted with
/// probability `(y_p(t) - y_p(t-1)) / (1 - y_p(t-1))`, `y_p = min(beta x_p, 1)`;
/// if the cache still overflows, the page with the largest `y` goes
/// (smallest id on ties).
pub fn round_randomized(rec: &FractionalRecord, beta: f64, seed: u64) -> Result<RandomizedRun> {
    let h = &rec.header;
    let trace = RequestTrace::new(h.k, h.pages, rec.requests())?;
    let mut offset = vec![0usize; h.pages + 1];
    for v in &rec.vars {
        offset[v.page as usize] += 1;
    }
    for p in 1..=h.pages {
        offset[p] += offset[p - 1];
    }
    let var_index = |p: PageId, j: u32| offset[p as usize - 1] + j as usize - 1;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = vec![0.0f64; h.pages];
    let mut triggered = vec![false; rec.vars.len()];
    let mut y_final = vec![0.0f64; rec.vars.len()];
    let mut cache: Vec<PageId> = Vec::with_capacity(h.k + 1);
    let mut steps = Vec::with_capacity(rec.rounds.len());
    let (mut coin_evictions, mut reset_evictions) = (0u64, 0u64);
    for (i, round) in rec.rounds.iter().enumerate() {
        let t = i + 1;
        let pt = round.page;
        let fault = !cache.contains(&pt);
        if fault {
            cache.push(pt);
        }
        y[pt as usize - 1] = 0.0;
        let mut evicted = Vec::new();
        for c in round.changes.iter().filter(|c| c.page != pt) {
            let old = y[c.page as usize - 1];
            let new = (beta * c.x).min(1.0);
            if new < old {
                return Err(PagingError::TrajectoryCorruption {
                    round: t,
                    page: c.page,
                    probability: (new - old) / (1.0 - old),
                });
            }
            if new == old {
                continue;
            }
            let prob = (new - old) / (1.0 - old);
            if !(-1e-12..=1.0 + 1e-12).contains(&prob) {
                return Err(PagingError::TrajectoryCorruption {
                    round: t,
                    page: c.page,
                    probability: prob,
                });
            }
            let v = var_index(c.page, c.j);
            y_final[v] = new;
            y[c.page as usize - 1] = new;
            if triggered[v] {
                continue;
            }
            if rng.gen::<f64>() < prob {
                triggered[v] = true;
                if let Some(at) = cache.iter().position(|&q| q == c.page) {
                    cache.swap_remove(at);
                    evicted.push(c.page);
                    coin_evictions += 1;
                }
            }
        }
        if cache.len() > h.k {
            let (at, &q) = cache
                .iter()
                .enumerate()
                .filter(|(_, &q)| q != pt)
                .max_by(|(_, &a), (_, &b)| y[a as usize - 1].total_cmp(&y[b as usize - 1]).then(b.cmp(&a)))
                .expect("overfull cache holds a page other than the request");
            cache.swap_remove(at);
            evicted.push(q);
            reset_evictions += 1;
        }
        steps.push(ScheduleStep { fault, evicted });
    }
    let schedule = Schedule::from_steps("randomized-rounding", &trace, steps)?;
    let mut coin_faults = CostVector::zeros(h.pages);
    for (v, &hit) in rec.vars.iter().zip(&triggered) {
        if hit {
            coin_faults.add(v.page, 1.0);
        }
    }
    Ok(RandomizedRun {
        seed,
        beta,
        schedule,
        triggered,
        y_final,
        coin_faults,
        coin_evictions,
        reset_evictions,
    })
}

/// Monte Carlo check of `E[max_p Y_p] <= e max_p E[Y_p] + ln n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub trials: usize,
    #[serde(with = "serde_finite")]
    pub mean_max: f64,
    #[serde(with = "serde_finite")]
    pub stderr: f64,
    /// `max_p E[Y_p]`.
    #[serde(with = "serde_finite")]
    pub max_mean: f64,
    /// `e max_p E[Y_p] + ln n`.
    #[serde(with = "serde_finite")]
    pub bound: f64,
    pub pass: bool,
}

/// `samples[trial][p]` holds `Y_p` for one trial; `means[p] = E[Y_p]`.
/// Passes when the empirical mean of `max_p Y_p` is within three standard
/// errors of the bound.
pub fn max_fault_concentration_check(samples: &[Vec<f64>], means: &[f64]) -> ConcentrationReport {
    let maxima: Vec<f64> = samples.iter().map(|s| s.iter().copied().fold(0.0, f64::max)).collect();
    let trials = maxima.len();
    let mean_max = if trials == 0 {
        0.0
    } else {
        maxima.iter().sum::<f64>() / trials as f64
    };
    let stderr = if trials < 2 {
        0.0
    } else {
        let var = maxima.iter().map(|m| (m - mean_max).powi(2)).sum::<f64>() / (trials - 1) as f64;
        (var / trials as f64).sqrt()
    };
    let max_mean = means.iter().copied().fold(0.0, f64::max);
    let bound = std::f64::consts::E * max_mean + (means.len().max(1) as f64).ln();
    ConcentrationReport {
        trials,
        mean_max,
        stderr,
        max_mean,
        bound,
        pass: mean_max <= bound + 3.0 * stderr,
    }
}

/// Draws `Y_p = sum_j Bernoulli(probs[p][j])` independently, `trials` times.
pub fn simulate_bernoulli_maxima(probs: &[Vec<f64>], trials: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            probs
                .iter()
                .map(|page| page.iter().filter(|&&p| rng.gen::<f64>() < p).count() as f64)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::run_fractional;
    use crate::objective::{Objective, SolverParams};

    #[test]
    fn eviction_probability_arithmetic() {
        let (old, new) = (0.2f64, 0.5f64);
        assert!(((new - old) / (1.0 - old) - 0.375).abs() < 1e-15);
        let old = 0.4f64;
        assert_eq!((1.0 - old) / (1.0 - old), 1.0);
    }

    #[test]
    fn cache_respects_capacity_and_replays() {
        let reqs: Vec<PageId> = (0..300).map(|i| ((i * 7 + i / 5) % 6 + 1) as PageId).collect();
        let trace = RequestTrace::new(3, 6, reqs).unwrap();
        let obj = Objective::minmax(6);
        let rec = run_fractional(&trace, obj, SolverParams::new(3, obj.q()).with_horizon(300)).unwrap();
        let beta = default_beta(6, 3);
        let a = round_randomized(&rec, beta, 11).unwrap();
        let b = round_randomized(&rec, beta, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.y_final.iter().all(|&y| (0.0..=1.0).contains(&y)));
    }

    #[test]
    fn concentration_trivial_cases() {
        let samples = simulate_bernoulli_maxima(&vec![vec![0.0; 5]; 4], 100, 1);
        let rep = max_fault_concentration_check(&samples, &[0.0; 4]);
        assert_eq!(rep.mean_max, 0.0);
        assert!(rep.pass);
        let samples = simulate_bernoulli_maxima(&[vec![0.5; 8]], 2000, 2);
        let rep = max_fault_concentration_check(&samples, &[4.0]);
        assert!(rep.pass);
        assert!((rep.mean_max - 4.0).abs() < 0.2);
    }

    #[test]
    fn sixteen_pages_monte_carlo() {
        let probs = vec![vec![0.3; 50]; 16];
        let samples = simulate_bernoulli_maxima(&probs, 10_000, 3);
        let rep = max_fault_concentration_check(&samples, &[15.0; 16]);
        assert!(rep.pass);
        assert!(rep.mean_max < 0.99 * rep.bound);
    }
}
