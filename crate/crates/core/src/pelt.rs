//! Exact penalized changepoint detection over day-indexed sequences.
//!
//! The engine minimizes `sum of segment costs + penalty * regime_count`
//! over all contiguous partitions respecting the cost's minimum segment
//! length, by dynamic programming over prefix lengths with candidate
//! pruning. Pruning is exact when the cost is subadditive
//! (`cost(s,t) + cost(t+1,u) <= cost(s,u)`), which holds for both cost
//! families in [`crate::cost`]; the pruning constant is zero for
//! squared-error costs.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pwlf::FitError;

/// Error from evaluating a segment cost.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("segment {first_day}..={last_day} out of range for {n_days} days")]
    OutOfRange {
        first_day: usize,
        last_day: usize,
        n_days: usize,
    },
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("{n_days} day(s) is shorter than the minimum segment length {min_segment_length}")]
    TooShort {
        n_days: usize,
        min_segment_length: usize,
    },
    #[error("penalty must be finite and >= 0, got {0}")]
    InvalidPenalty(f64),
    #[error("cost evaluation failed on days {first_day}..={last_day}")]
    CostEvaluation {
        first_day: usize,
        last_day: usize,
        #[source]
        source: CostError,
    },
}

/// Cost of treating a day range as one regime.
///
/// Implementations must be deterministic (repeated evaluation of the same
/// segment returns the identical value) and, for exact pruning,
/// subadditive. Day indices are inclusive.
pub trait SegmentCost: Sync {
    fn cost(&self, first_day: usize, last_day: usize) -> Result<f64, CostError>;

    /// Smallest admissible regime length in days.
    fn min_segment_length(&self) -> usize {
        1
    }
}

/// An optimal partition of `[0, n_days)` into regimes.
///
/// Changepoints are stored as the last day index of each regime except
/// the final one, so regime `j` spans `changepoints[j-1] + 1` through
/// `changepoints[j]` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    changepoints: Vec<usize>,
    n_days: usize,
    penalty: f64,
    segment_cost_sum: f64,
}

impl Segmentation {
    /// Used by the enumeration oracle, which computes the same objective.
    pub(crate) fn from_parts(changepoints: Vec<usize>, n_days: usize, penalty: f64, segment_cost_sum: f64) -> Self {
        Self {
            changepoints,
            n_days,
            penalty,
            segment_cost_sum,
        }
    }

    pub fn changepoints(&self) -> &[usize] {
        &self.changepoints
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    /// `sum of segment costs + penalty * regime_count`.
    pub fn total_cost(&self) -> f64 {
        self.segment_cost_sum + self.penalty * self.regime_count() as f64
    }

    pub fn regime_count(&self) -> usize {
        self.changepoints.len() + 1
    }

    /// Inclusive `(first_day, last_day)` ranges of each regime.
    pub fn regimes(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.regime_count());
        let mut first = 0;
        for &cp in &self.changepoints {
            out.push((first, cp));
            first = cp + 1;
        }
        out.push((first, self.n_days - 1));
        out
    }

    /// Sum of segment costs without the penalty term. For a single
    /// regime this is the baseline cost bit for bit.
    pub fn cost_without_penalty(&self) -> f64 {
        self.segment_cost_sum
    }

    /// Serializable report with calendar dates of each regime shift (the
    /// first day of each new regime).
    pub fn report(&self, day_dates: Option<&[NaiveDate]>) -> SegmentationReport {
        let changepoint_dates = day_dates.map(|dates| {
            self.changepoints
                .iter()
                .map(|&cp| dates[cp + 1].to_string())
                .collect()
        });
        SegmentationReport {
            penalty: self.penalty,
            changepoint_days: self.changepoints.clone(),
            changepoint_dates,
            regime_count: self.regime_count(),
            total_cost: self.total_cost(),
        }
    }
}

/// JSON shape of a segmentation:
/// `{penalty, changepoint_days, changepoint_dates, regime_count, total_cost}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub penalty: f64,
    pub changepoint_days: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub changepoint_dates: Option<Vec<String>>,
    pub regime_count: usize,
    pub total_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentOptions {
    /// Disable to fall back to plain optimal partitioning; used by the
    /// pruning-soundness oracle tests.
    pub pruning: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self { pruning: true }
    }
}

/// A changepoint candidate. A candidate that fails the pruning test at
/// step `t` provably cannot start the final segment of any optimal
/// prefix of length `>= t + L` (subadditivity bridges through a valid
/// segment `(t+1..u)` only when `u - t >= L`), but it may still win at
/// the `L - 1` steps in between, so removal is deferred to `expires`.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    tau: usize,
    expires: usize,
}

const NEVER: usize = usize::MAX;

/// Tag candidates whose evaluated extension can no longer start the
/// final segment of an optimal partition (`F(tau) + cost > F(t)`); kept
/// with `<=` at the margin. Candidates too recent to evaluate are left
/// untouched. The set never empties because `t` itself joins it.
fn prune_candidates(candidates: &mut [Candidate], evaluated: &[Option<f64>], f: &[f64], f_t: f64, min_len: usize, t: usize) {
    for (cand, cost) in candidates.iter_mut().zip(evaluated) {
        if let Some(c) = cost {
            if f[cand.tau] + c > f_t && cand.expires == NEVER {
                cand.expires = t + min_len;
            }
        }
    }
}

fn evaluate_candidates(
    cost: &(impl SegmentCost + ?Sized),
    candidates: &[Candidate],
    t: usize,
    min_len: usize,
) -> Result<Vec<Option<f64>>, SegmentError> {
    let eval_one = |cand: &Candidate| -> Option<Result<f64, SegmentError>> {
        let tau = cand.tau;
        if t - tau < min_len {
            return None;
        }
        Some(
            cost.cost(tau, t - 1)
                .map_err(|source| SegmentError::CostEvaluation {
                    first_day: tau,
                    last_day: t - 1,
                    source,
                }),
        )
    };
    #[cfg(feature = "parallel")]
    let raw: Vec<Option<Result<f64, SegmentError>>> = {
        use rayon::prelude::*;
        if candidates.len() >= 8 {
            candidates.par_iter().map(eval_one).collect()
        } else {
            candidates.iter().map(eval_one).collect()
        }
    };
    #[cfg(not(feature = "parallel"))]
    let raw: Vec<Option<Result<f64, SegmentError>>> = candidates.iter().map(eval_one).collect();

    // Deterministic reduction in candidate order, independent of worker
    // count: first error wins.
    raw.into_iter().map(Option::transpose).collect()
}

/// Exact penalized segmentation of `[0, n_days)`.
pub fn segment_with_options(
    cost: &(impl SegmentCost + ?Sized),
    n_days: usize,
    penalty: f64,
    options: SegmentOptions,
) -> Result<Segmentation, SegmentError> {
    let min_len = cost.min_segment_length().max(1);
    if n_days < min_len {
        return Err(SegmentError::TooShort {
            n_days,
            min_segment_length: min_len,
        });
    }
    if !penalty.is_finite() || penalty < 0.0 {
        return Err(SegmentError::InvalidPenalty(penalty));
    }

    let mut f = vec![f64::INFINITY; n_days + 1];
    f[0] = -penalty;
    let mut back = vec![usize::MAX; n_days + 1];
    let mut candidates: Vec<Candidate> = vec![Candidate { tau: 0, expires: NEVER }];

    for t in 1..=n_days {
        if options.pruning {
            candidates.retain(|c| c.expires > t);
        }
        let evaluated = evaluate_candidates(cost, &candidates, t, min_len)?;
        let mut best = f64::INFINITY;
        let mut best_tau = usize::MAX;
        for (cand, cost_val) in candidates.iter().zip(&evaluated) {
            if let Some(c) = cost_val {
                let total = f[cand.tau] + c + penalty;
                // Ties break toward the larger tau: shorter final segment.
                if total <= best {
                    best = total;
                    best_tau = cand.tau;
                }
            }
        }
        if best_tau != usize::MAX {
            f[t] = best;
            back[t] = best_tau;
        }
        if options.pruning {
            prune_candidates(&mut candidates, &evaluated, &f, f[t], min_len, t);
        }
        if f[t].is_finite() && t < n_days {
            candidates.push(Candidate { tau: t, expires: NEVER });
        }
    }

    debug_assert!(f[n_days].is_finite());
    let mut boundaries = Vec::new();
    let mut t = n_days;
    while t > 0 {
        boundaries.push(t);
        t = back[t];
    }
    boundaries.reverse();
    // Boundaries are prefix lengths; drop the final one and convert to
    // last-day indices.
    let changepoints: Vec<usize> = boundaries[..boundaries.len() - 1].iter().map(|b| b - 1).collect();

    // Report the cost sum from the final partition itself rather than
    // the DP accumulator: the -penalty/+penalty chain in F would leave
    // rounding dust, and the single-regime cost must equal the baseline
    // bit for bit.
    let mut segment_cost_sum = 0.0;
    let mut first = 0usize;
    for &last in changepoints.iter().chain(std::iter::once(&(n_days - 1))) {
        segment_cost_sum += cost.cost(first, last).map_err(|source| SegmentError::CostEvaluation {
            first_day: first,
            last_day: last,
            source,
        })?;
        first = last + 1;
    }
    Ok(Segmentation {
        changepoints,
        n_days,
        penalty,
        segment_cost_sum,
    })
}

/// [`segment_with_options`] with pruning enabled.
pub fn segment(cost: &(impl SegmentCost + ?Sized), n_days: usize, penalty: f64) -> Result<Segmentation, SegmentError> {
    segment_with_options(cost, n_days, penalty, SegmentOptions::default())
}

/// Memo of segment-cost evaluations keyed by `(first_day, last_day)`.
///
/// Penalty sweeps re-segment the same data many times; sharing one cache
/// across calls makes repeat runs evaluation-free. Safe for concurrent
/// insert/read.
#[derive(Debug, Default)]
pub struct CostCache {
    map: Mutex<HashMap<(usize, usize), f64>>,
}

impl CostCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.lock().unwrap().clear();
    }
}

/// Cost adapter that consults a shared [`CostCache`] first. Semantically
/// transparent: outputs are identical with or without it.
pub struct CachedCost<'a, C: SegmentCost + ?Sized> {
    inner: &'a C,
    cache: &'a CostCache,
}

impl<'a, C: SegmentCost + ?Sized> CachedCost<'a, C> {
    pub fn new(inner: &'a C, cache: &'a CostCache) -> Self {
        Self { inner, cache }
    }
}

impl<C: SegmentCost + ?Sized> SegmentCost for CachedCost<'_, C> {
    fn cost(&self, first_day: usize, last_day: usize) -> Result<f64, CostError> {
        let key = (first_day, last_day);
        if let Some(&hit) = self.cache.map.lock().unwrap().get(&key) {
            return Ok(hit);
        }
        let value = self.inner.cost(first_day, last_day)?;
        self.cache.map.lock().unwrap().insert(key, value);
        Ok(value)
    }

    fn min_segment_length(&self) -> usize {
        self.inner.min_segment_length()
    }
}

/// [`segment`] sharing cost evaluations through `cache`.
pub fn segment_with_cache(
    cost: &(impl SegmentCost + ?Sized),
    n_days: usize,
    penalty: f64,
    cache: &CostCache,
) -> Result<Segmentation, SegmentError> {
    segment(&CachedCost::new(cost, cache), n_days, penalty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Within-segment variance cost over one series, computed naively.
    struct VarianceCost {
        values: Vec<f64>,
    }

    impl SegmentCost for VarianceCost {
        fn cost(&self, first_day: usize, last_day: usize) -> Result<f64, CostError> {
            if last_day >= self.values.len() || first_day > last_day {
                return Err(CostError::OutOfRange {
                    first_day,
                    last_day,
                    n_days: self.values.len(),
                });
            }
            let seg = &self.values[first_day..=last_day];
            let mean = seg.iter().sum::<f64>() / seg.len() as f64;
            Ok(seg.iter().map(|v| (v - mean) * (v - mean)).sum())
        }
    }

    struct CountingCost<'a, C: SegmentCost> {
        inner: &'a C,
        calls: AtomicUsize,
    }

    impl<C: SegmentCost> SegmentCost for CountingCost<'_, C> {
        fn cost(&self, first_day: usize, last_day: usize) -> Result<f64, CostError> {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.cost(first_day, last_day)
        }

        fn min_segment_length(&self) -> usize {
            self.inner.min_segment_length()
        }
    }

    #[test]
    fn constant_series_single_regime() {
        let cost = VarianceCost { values: vec![4.2; 30] };
        let seg = segment(&cost, 30, 0.5).unwrap();
        assert_eq!(seg.regime_count(), 1);
        assert!(seg.changepoints().is_empty());
        assert!((seg.total_cost() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn step_series_one_changepoint() {
        let mut values = vec![0.0; 100];
        values.extend(vec![10.0; 100]);
        let cost = VarianceCost { values };
        let seg = segment(&cost, 200, 1.0).unwrap();
        assert_eq!(seg.changepoints(), &[99]);
        assert_eq!(seg.regime_count(), 2);
    }

    #[test]
    fn huge_penalty_single_regime() {
        let mut values = vec![0.0; 20];
        values.extend(vec![100.0; 20]);
        let cost = VarianceCost { values };
        let seg = segment(&cost, 40, 1e12).unwrap();
        assert_eq!(seg.regime_count(), 1);
    }

    #[test]
    fn total_cost_consistent_with_recomputation() {
        let values: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 + if i > 30 { 8.0 } else { 0.0 }).collect();
        let cost = VarianceCost { values };
        let beta = 3.0;
        let seg = segment(&cost, 60, beta).unwrap();
        let recomputed: f64 = seg
            .regimes()
            .iter()
            .map(|&(a, b)| cost.cost(a, b).unwrap())
            .sum::<f64>()
            + beta * seg.regime_count() as f64;
        assert!((recomputed - seg.total_cost()).abs() <= 1e-9 * recomputed.abs().max(1.0));
    }

    #[test]
    fn pruning_preserves_output() {
        let mut state = 9u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..25 {
            let n = 20 + (rnd() * 30.0) as usize;
            let values: Vec<f64> = (0..n).map(|i| rnd() * 4.0 + if i > n / 2 { 6.0 } else { 0.0 }).collect();
            let cost = VarianceCost { values };
            let beta = rnd() * 10.0;
            let pruned = segment_with_options(&cost, n, beta, SegmentOptions { pruning: true }).unwrap();
            let full = segment_with_options(&cost, n, beta, SegmentOptions { pruning: false }).unwrap();
            assert_eq!(pruned.changepoints(), full.changepoints());
            assert_eq!(pruned.total_cost(), full.total_cost());
        }
    }

    #[test]
    fn first_step_retains_initial_candidate() {
        let f = vec![-1.0, 0.5, f64::INFINITY];
        let mut cands = vec![Candidate { tau: 0, expires: NEVER }];
        prune_candidates(&mut cands, &[Some(1.5)], &f, f[1], 1, 1);
        assert_eq!(cands[0].expires, NEVER);
    }

    #[test]
    fn equal_cost_segments_kept_at_margin() {
        // F(tau) + c == F(t): the <= rule keeps the candidate untagged;
        // unevaluated candidates are untouched.
        let f = vec![0.0, 2.0, f64::INFINITY];
        let mut cands = vec![
            Candidate { tau: 0, expires: NEVER },
            Candidate { tau: 1, expires: NEVER },
        ];
        prune_candidates(&mut cands, &[Some(2.0), None], &f, 2.0, 1, 1);
        assert!(cands.iter().all(|c| c.expires == NEVER));
    }

    #[test]
    fn failed_candidate_expires_after_min_segment_window() {
        // F(0) + 5.0 > F(t): tagged to expire min_len steps later, so it
        // is still considered at the intermediate steps where the
        // bridging segment would be too short.
        let f = vec![0.0, f64::INFINITY, 3.0, f64::INFINITY];
        let mut cands = vec![Candidate { tau: 0, expires: NEVER }];
        prune_candidates(&mut cands, &[Some(5.0)], &f, f[2], 3, 2);
        assert_eq!(cands[0].expires, 5);
        // A second failure never shortens the expiry.
        prune_candidates(&mut cands, &[Some(9.0)], &f, f[2], 3, 2);
        assert_eq!(cands[0].expires, 5);
    }

    #[test]
    fn cache_is_transparent_and_saves_evaluations() {
        let values: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0 + if i >= 25 { 5.0 } else { 0.0 }).collect();
        let cost = VarianceCost { values };
        let cache = CostCache::new();

        let counted = CountingCost {
            inner: &cost,
            calls: AtomicUsize::new(0),
        };
        let first = segment_with_cache(&counted, 50, 2.0, &cache).unwrap();
        let first_calls = counted.calls.load(Ordering::Relaxed);
        assert!(first_calls > 0);

        let second = segment_with_cache(&counted, 50, 2.0, &cache).unwrap();
        assert_eq!(counted.calls.load(Ordering::Relaxed), first_calls, "second run must be evaluation-free");
        assert_eq!(first, second);

        // Sweep over penalties: cached runs match uncached ones.
        for beta in [0.1, 0.5, 1.0, 2.5, 7.0, 20.0, 60.0, 150.0, 400.0, 1000.0] {
            let cached = segment_with_cache(&cost, 50, beta, &cache).unwrap();
            let plain = segment(&cost, 50, beta).unwrap();
            assert_eq!(cached.changepoints(), plain.changepoints());
            assert_eq!(cached.total_cost(), plain.total_cost());
        }

        // Clearing the cache changes nothing semantically.
        cache.clear();
        let third = segment_with_cache(&cost, 50, 2.0, &cache).unwrap();
        assert_eq!(first, third);
    }

    #[test]
    fn min_segment_length_respected() {
        struct MinLenCost(VarianceCost);
        impl SegmentCost for MinLenCost {
            fn cost(&self, a: usize, b: usize) -> Result<f64, CostError> {
                self.0.cost(a, b)
            }
            fn min_segment_length(&self) -> usize {
                5
            }
        }
        let mut values = vec![0.0; 2];
        values.extend(vec![50.0; 18]);
        let cost = MinLenCost(VarianceCost { values });
        let seg = segment(&cost, 20, 0.1).unwrap();
        for (a, b) in seg.regimes() {
            assert!(b - a + 1 >= 5);
        }
        assert!(matches!(
            segment(&cost, 3, 0.1),
            Err(SegmentError::TooShort { .. })
        ));
    }

    #[test]
    fn invalid_penalty_rejected() {
        let cost = VarianceCost { values: vec![0.0; 10] };
        assert!(matches!(segment(&cost, 10, -1.0), Err(SegmentError::InvalidPenalty(_))));
        assert!(matches!(segment(&cost, 10, f64::NAN), Err(SegmentError::InvalidPenalty(_))));
    }

    #[test]
    fn report_emits_shift_dates() {
        let mut values = vec![0.0; 5];
        values.extend(vec![9.0; 5]);
        let cost = VarianceCost { values };
        let seg = segment(&cost, 10, 0.5).unwrap();
        let dates: Vec<chrono::NaiveDate> = (0..10)
            .map(|i| chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Duration::days(i))
            .collect();
        let report = seg.report(Some(&dates));
        assert_eq!(report.changepoint_days, vec![4]);
        assert_eq!(report.changepoint_dates.unwrap(), vec!["2021-01-06"]);
        assert_eq!(report.regime_count, 2);
    }
}
