//! Penalty sweeps with the unexplained-variance stopping criterion,
//! per-regime supply-curve estimation, and pairwise regime similarity.
//!
//! The sweep runs the segmentation engine over a penalty grid, shares one
//! cost cache across all grid points, and reports one
//! `(regime count, unexplained ratio)` point per distinct count. The
//! ratio divides the segmentation cost (without the penalty term) by the
//! single-regime baseline, so it is exactly 1 at one regime and
//! non-increasing as regimes are added. Threshold resolution follows the
//! convention that "explain X%" means a ratio of at most `1 - X`, with
//! linear interpolation on `(count, ratio)` pairs where no observed count
//! sits at the crossing; interpolated counts round up.

use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

use crate::cost::{baseline_cost, CurveSpec, EffectCost};
use crate::market_data::EquilibriumSeries;
use crate::pelt::{segment_with_cache, CostCache, CostError, SegmentCost, SegmentError, Segmentation};
use crate::pwlf::{FitReport, PiecewiseLinearCurve, SearchConfig};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid penalty grid: {0}")]
    InvalidGrid(String),
    #[error("threshold {threshold} is unreachable; the grid's unexplained-ratio floor is {floor}")]
    Unreachable { threshold: f64, floor: f64 },
    #[error("curve supports do not overlap")]
    EmptyOverlap,
    #[error("need at least 2 regimes, got {0}")]
    TooFewRegimes(usize),
    #[error("regime {regime} cannot be fitted")]
    RegimeFit {
        regime: usize,
        #[source]
        source: CostError,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// One deduplicated sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub penalty: f64,
    pub regime_count: usize,
    /// Segmentation cost without the penalty term, divided by baseline.
    pub unexplained_ratio: f64,
    pub segmentation: Segmentation,
}

/// Pareto ladder of (regime count, unexplained ratio) from a penalty
/// sweep, sorted by ascending regime count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub baseline: f64,
    pub points: Vec<SweepPoint>,
    /// Filled by [`resolve_threshold`] callers.
    pub thresholds_resolved: Vec<ThresholdResolution>,
}

/// Outcome of resolving one explained-variance threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResolution {
    /// Requested fraction of explained variance.
    pub threshold: f64,
    /// Smallest regime count achieving it (interpolated counts round up).
    pub regime_count: usize,
    pub interpolated: bool,
    /// Closest observed count achieving the threshold, when interpolated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nearest_observed: Option<usize>,
}

/// Default sweep grid: `points` logarithmically spaced penalties between
/// `1e-6 * baseline` and `baseline`. Spanning up to the baseline
/// guarantees the single-regime point appears.
pub fn default_beta_grid(baseline: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let hi = if baseline > 0.0 { baseline } else { 1.0 };
    let lo = hi * 1e-6;
    (0..points)
        .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
        .collect()
}

fn ratio(cost_without_penalty: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        (cost_without_penalty / baseline).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Segment once per grid penalty (sharing `cache`), deduplicate by regime
/// count keeping the minimal cost, and report unexplained ratios.
pub fn sweep_penalty(
    cost: &(impl SegmentCost + Sync + ?Sized),
    n_days: usize,
    beta_grid: &[f64],
) -> Result<SweepResult, AnalysisError> {
    sweep_penalty_with_cache(cost, n_days, beta_grid, &CostCache::new())
}

pub fn sweep_penalty_with_cache(
    cost: &(impl SegmentCost + Sync + ?Sized),
    n_days: usize,
    beta_grid: &[f64],
    cache: &CostCache,
) -> Result<SweepResult, AnalysisError> {
    if beta_grid.is_empty() {
        return Err(AnalysisError::InvalidGrid("empty grid".into()));
    }
    if beta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::InvalidGrid("grid must be strictly ascending".into()));
    }
    if beta_grid.iter().any(|b| !b.is_finite() || *b <= 0.0) {
        return Err(AnalysisError::InvalidGrid("penalties must be finite and positive".into()));
    }
    let baseline = baseline_cost(cost, n_days)?;

    let run = |&beta: &f64| segment_with_cache(cost, n_days, beta, cache);
    #[cfg(feature = "parallel")]
    let runs: Vec<Result<Segmentation, SegmentError>> = {
        use rayon::prelude::*;
        beta_grid.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<Result<Segmentation, SegmentError>> = beta_grid.iter().map(run).collect();

    let mut by_count: std::collections::BTreeMap<usize, SweepPoint> = std::collections::BTreeMap::new();
    for (beta, seg) in beta_grid.iter().zip(runs) {
        let seg = seg?;
        let unpenalized = seg.cost_without_penalty();
        let point = SweepPoint {
            penalty: *beta,
            regime_count: seg.regime_count(),
            unexplained_ratio: ratio(unpenalized, baseline),
            segmentation: seg,
        };
        by_count
            .entry(point.regime_count)
            .and_modify(|existing| {
                if point.unexplained_ratio < existing.unexplained_ratio {
                    *existing = point.clone();
                }
            })
            .or_insert(point);
    }
    Ok(SweepResult {
        baseline,
        points: by_count.into_values().collect(),
        thresholds_resolved: Vec::new(),
    })
}

/// Smallest regime count whose unexplained ratio is at most
/// `1 - threshold`. When the crossing falls strictly between two observed
/// counts, interpolate linearly on `(count, ratio)`, round up, and report
/// the nearest observed count alongside.
pub fn resolve_threshold(sweep: &SweepResult, threshold: f64) -> Result<ThresholdResolution, AnalysisError> {
    if sweep.points.is_empty() {
        return Err(AnalysisError::InvalidGrid("sweep has no points".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(AnalysisError::InvalidInput(format!(
            "threshold must be in [0, 1], got {threshold}"
        )));
    }
    let target = 1.0 - threshold;
    let eps = 1e-12;
    let hit = sweep
        .points
        .iter()
        .position(|p| p.unexplained_ratio <= target + eps);
    let Some(idx) = hit else {
        let floor = sweep
            .points
            .iter()
            .map(|p| p.unexplained_ratio)
            .fold(f64::INFINITY, f64::min);
        return Err(AnalysisError::Unreachable { threshold, floor });
    };
    let point = &sweep.points[idx];
    if idx == 0 || sweep.points[idx - 1].regime_count + 1 == point.regime_count {
        return Ok(ThresholdResolution {
            threshold,
            regime_count: point.regime_count,
            interpolated: false,
            nearest_observed: None,
        });
    }
    let prev = &sweep.points[idx - 1];
    let slope_span = prev.unexplained_ratio - point.unexplained_ratio;
    let frac = (prev.unexplained_ratio - target) / slope_span;
    let interpolated = prev.regime_count as f64 + frac * (point.regime_count - prev.regime_count) as f64;
    let rounded_up = (interpolated - 1e-9).ceil() as usize;
    Ok(ThresholdResolution {
        threshold,
        regime_count: rounded_up.clamp(prev.regime_count + 1, point.regime_count),
        interpolated: true,
        nearest_observed: Some(point.regime_count),
    })
}

/// Outcome of searching the penalty for an exact regime count.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetOutcome {
    Exact {
        penalty: f64,
        segmentation: Segmentation,
    },
    /// The count is not attainable; the closest achievable counts on
    /// either side. `more` is absent when even a zero penalty yields
    /// fewer regimes than requested.
    Bracketed {
        fewer: (f64, Segmentation),
        more: Option<(f64, Segmentation)>,
    },
}

/// Binary-search the penalty for a segmentation with exactly `target`
/// regimes. Regime count is non-increasing in the penalty, so bisection
/// either hits the count or converges onto the jump across it.
pub fn segment_target_count(
    cost: &(impl SegmentCost + Sync + ?Sized),
    n_days: usize,
    target: usize,
    cache: &CostCache,
) -> Result<TargetOutcome, AnalysisError> {
    if target == 0 {
        return Err(AnalysisError::InvalidInput("target regime count must be >= 1".into()));
    }
    let baseline = baseline_cost(cost, n_days)?;

    let at_zero = segment_with_cache(cost, n_days, 0.0, cache)?;
    if at_zero.regime_count() == target {
        return Ok(TargetOutcome::Exact {
            penalty: 0.0,
            segmentation: at_zero,
        });
    }
    if at_zero.regime_count() < target {
        return Ok(TargetOutcome::Bracketed {
            fewer: (0.0, at_zero),
            more: None,
        });
    }

    let mut hi = (2.0 * baseline).max(1e-6);
    let mut seg_hi = segment_with_cache(cost, n_days, hi, cache)?;
    for _ in 0..64 {
        if seg_hi.regime_count() <= target {
            break;
        }
        hi *= 4.0;
        seg_hi = segment_with_cache(cost, n_days, hi, cache)?;
    }
    if seg_hi.regime_count() == target {
        return Ok(TargetOutcome::Exact {
            penalty: hi,
            segmentation: seg_hi,
        });
    }

    let mut lo = 0.0f64;
    let mut seg_lo = at_zero;
    // Invariant: count(lo) > target > count(hi).
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let seg_mid = segment_with_cache(cost, n_days, mid, cache)?;
        match seg_mid.regime_count().cmp(&target) {
            std::cmp::Ordering::Equal => {
                return Ok(TargetOutcome::Exact {
                    penalty: mid,
                    segmentation: seg_mid,
                })
            }
            std::cmp::Ordering::Greater => {
                lo = mid;
                seg_lo = seg_mid;
            }
            std::cmp::Ordering::Less => {
                hi = mid;
                seg_hi = seg_mid;
            }
        }
    }
    Ok(TargetOutcome::Bracketed {
        fewer: (hi, seg_hi),
        more: Some((lo, seg_lo)),
    })
}

/// One supply curve per regime of a segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCurveSet {
    pub segmentation: Segmentation,
    pub curves: Vec<FitReport>,
    /// Fraction of all hours in each regime; sums to 1.
    pub coverage: Vec<f64>,
    /// Residual-load range actually supported by each regime's data;
    /// inference outside it is extrapolation.
    pub supported_ranges: Vec<(f64, f64)>,
}

/// Fit the configured curve to the hourly equilibria of every regime.
pub fn fit_regime_curves(
    series: &EquilibriumSeries,
    segmentation: &Segmentation,
    spec: CurveSpec,
    search: &SearchConfig,
) -> Result<RegimeCurveSet, AnalysisError> {
    if segmentation.n_days() != series.days() {
        return Err(AnalysisError::InvalidInput(format!(
            "segmentation covers {} day(s) but the series has {}",
            segmentation.n_days(),
            series.days()
        )));
    }
    let cost = EffectCost::new(series, spec, search.clone());
    let total = series.len() as f64;
    let mut curves = Vec::new();
    let mut coverage = Vec::new();
    let mut supported_ranges = Vec::new();
    for (regime, (first, last)) in segmentation.regimes().into_iter().enumerate() {
        let report = cost
            .fit_report(first, last)
            .map_err(|source| AnalysisError::RegimeFit { regime, source })?;
        coverage.push(series.day_range(first, last).len() as f64 / total);
        supported_ranges.push(report.curve.support());
        curves.push((*report).clone());
    }
    Ok(RegimeCurveSet {
        segmentation: segmentation.clone(),
        curves,
        coverage,
        supported_ranges,
    })
}

/// Support over which two curves are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPolicy {
    /// Overlap of both supports; fails on disjoint ranges.
    Intersection,
    /// Hull of both supports, extrapolating each curve linearly.
    UnionWithExtrapolation,
}

impl std::fmt::Display for SupportPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SupportPolicy::Intersection => write!(f, "intersection"),
            SupportPolicy::UnionWithExtrapolation => write!(f, "union_with_extrapolation"),
        }
    }
}

impl FromStr for SupportPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intersection" => Ok(SupportPolicy::Intersection),
            "union" | "union_with_extrapolation" => Ok(SupportPolicy::UnionWithExtrapolation),
            other => Err(format!("unknown support policy `{other}`")),
        }
    }
}

/// Exact integral of `|a(q) - b(q)|` over the policy support, with the
/// support width. Closed form per linear piece, splitting at sign
/// changes; no numeric quadrature.
pub fn area_between(
    a: &PiecewiseLinearCurve,
    b: &PiecewiseLinearCurve,
    support_a: (f64, f64),
    support_b: (f64, f64),
    policy: SupportPolicy,
) -> Result<(f64, f64), AnalysisError> {
    let (lo, hi) = match policy {
        SupportPolicy::Intersection => (support_a.0.max(support_b.0), support_a.1.min(support_b.1)),
        SupportPolicy::UnionWithExtrapolation => (support_a.0.min(support_b.0), support_a.1.max(support_b.1)),
    };
    if !(hi > lo) {
        return Err(AnalysisError::EmptyOverlap);
    }
    let mut knots = vec![lo, hi];
    for curve in [a, b] {
        for &bp in curve.breakpoints() {
            if bp > lo && bp < hi {
                knots.push(bp);
            }
        }
    }
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();

    let mut area = 0.0;
    for window in knots.windows(2) {
        let (u, v) = (window[0], window[1]);
        let du = a.evaluate(u) - b.evaluate(u);
        let dv = a.evaluate(v) - b.evaluate(v);
        let w = v - u;
        if du * dv >= 0.0 {
            area += 0.5 * (du.abs() + dv.abs()) * w;
        } else {
            // Sign change: split at the root of the affine difference.
            let root = u + w * du / (du - dv);
            area += 0.5 * du.abs() * (root - u) + 0.5 * dv.abs() * (v - root);
        }
    }
    Ok((area, hi - lo))
}

/// Mean absolute difference between two curves over the policy support:
/// the area between them divided by the support width, EUR/MWh.
pub fn curve_distance(
    a: &PiecewiseLinearCurve,
    b: &PiecewiseLinearCurve,
    support_a: (f64, f64),
    support_b: (f64, f64),
    policy: SupportPolicy,
) -> Result<f64, AnalysisError> {
    let (area, width) = area_between(a, b, support_a, support_b, policy)?;
    Ok(area / width)
}

/// Symmetric pairwise regime dissimilarity. Entries are mean absolute
/// curve distance (EUR/MWh); the raw area is kept alongside. Pairs with
/// empty overlap are marked absent rather than failing the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub policy: SupportPolicy,
    mean_abs: Vec<Option<f64>>,
    area: Vec<Option<f64>>,
}

impl SimilarityMatrix {
    /// Mean absolute distance between regimes `i` and `j`.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.mean_abs[i * self.n + j]
    }

    /// Raw area between the curves of regimes `i` and `j`.
    pub fn get_area(&self, i: usize, j: usize) -> Option<f64> {
        self.area[i * self.n + j]
    }

    /// Per regime, the most similar regime at least two steps away; the
    /// reversion diagnostic.
    pub fn nearest_non_adjacent(&self) -> Vec<Option<usize>> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .filter(|&j| j.abs_diff(i) >= 2)
                    .filter_map(|j| self.get(i, j).map(|d| (j, d)))
                    .min_by(|(_, x), (_, y)| x.partial_cmp(y).unwrap())
                    .map(|(j, _)| j)
            })
            .collect()
    }
}

pub fn similarity_matrix(set: &RegimeCurveSet, policy: SupportPolicy) -> Result<SimilarityMatrix, AnalysisError> {
    let n = set.curves.len();
    if n < 2 {
        return Err(AnalysisError::TooFewRegimes(n));
    }
    let mut mean_abs = vec![None; n * n];
    let mut area = vec![None; n * n];
    for i in 0..n {
        mean_abs[i * n + i] = Some(0.0);
        area[i * n + i] = Some(0.0);
        for j in i + 1..n {
            match area_between(
                &set.curves[i].curve,
                &set.curves[j].curve,
                set.supported_ranges[i],
                set.supported_ranges[j],
                policy,
            ) {
                Ok((a, width)) => {
                    mean_abs[i * n + j] = Some(a / width);
                    mean_abs[j * n + i] = Some(a / width);
                    area[i * n + j] = Some(a);
                    area[j * n + i] = Some(a);
                }
                Err(AnalysisError::EmptyOverlap) => {}
                Err(other) => return Err(other),
            }
        }
    }
    Ok(SimilarityMatrix {
        n,
        policy,
        mean_abs,
        area,
    })
}
