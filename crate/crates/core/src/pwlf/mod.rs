//! Continuous piecewise-linear least squares with fixed endpoint
//! breakpoints and non-negative segment slopes.
//!
//! A curve with breakpoints `b_1 <= ... <= b_K` is written on the hinge
//! basis: an intercept at `b_1` plus one hinge `max(0, q - b_j)` per
//! breakpoint except the last. The slope of segment `j` is the cumulative
//! sum of the first `j` hinge coefficients, and the monotonicity
//! constraint is that every such cumulative sum stays non-negative. The
//! endpoints are pinned to the fitted data's range; interior breakpoints
//! are chosen by an outer deterministic search (see [`SearchConfig`]) and
//! the coefficients by the exact active-set solver in `nnls`.

mod nnls;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use search::SearchConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("x and y have different lengths ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("x spans a zero range")]
    DegenerateRange,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A continuous piecewise-linear function with non-negative segment
/// slopes.
///
/// Evaluation below the first or above the last breakpoint extrapolates
/// with the first/last segment slope; callers reporting on uncovered load
/// ranges should surface that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearCurve {
    breakpoints: Vec<f64>,
    intercept: f64,
    slope_increments: Vec<f64>,
}

impl PiecewiseLinearCurve {
    /// Build a curve, validating shape and slope non-negativity.
    pub fn new(breakpoints: Vec<f64>, intercept: f64, slope_increments: Vec<f64>) -> Result<Self, FitError> {
        if breakpoints.len() < 2 {
            return Err(FitError::InvalidParameter("need at least two breakpoints".into()));
        }
        if slope_increments.len() != breakpoints.len() - 1 {
            return Err(FitError::InvalidParameter(format!(
                "{} breakpoints require {} slope increments, got {}",
                breakpoints.len(),
                breakpoints.len() - 1,
                slope_increments.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[1] < w[0]) {
            return Err(FitError::InvalidParameter("breakpoints must be sorted".into()));
        }
        if breakpoints.iter().any(|v| !v.is_finite())
            || slope_increments.iter().any(|v| !v.is_finite())
            || !intercept.is_finite()
        {
            return Err(FitError::NonFinite);
        }
        let mut cum = 0.0;
        for inc in &slope_increments {
            cum += inc;
            if cum < -1e-9 {
                return Err(FitError::InvalidParameter(format!("negative segment slope {cum}")));
            }
        }
        Ok(Self {
            breakpoints,
            intercept,
            slope_increments,
        })
    }

    /// A single straight line through `(x0, y0)` with the given slope over
    /// `[x0, x1]`.
    pub fn line(x0: f64, x1: f64, y0: f64, slope: f64) -> Result<Self, FitError> {
        Self::new(vec![x0, x1], y0, vec![slope])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Value at the first breakpoint.
    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Hinge coefficients, one per breakpoint except the last.
    pub fn slope_increments(&self) -> &[f64] {
        &self.slope_increments
    }

    /// Slope of each segment: cumulative sums of the increments.
    pub fn segment_slopes(&self) -> Vec<f64> {
        self.slope_increments
            .iter()
            .scan(0.0, |acc, inc| {
                *acc += inc;
                Some(*acc)
            })
            .collect()
    }

    /// Fitted data range `(b_1, b_K)`.
    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], self.breakpoints[self.breakpoints.len() - 1])
    }

    /// `intercept + sum_j inc_j * max(0, q - b_j)`; continuous in `q`,
    /// extrapolates linearly outside the support.
    pub fn evaluate(&self, q: f64) -> f64 {
        let mut v = self.intercept;
        for (j, inc) in self.slope_increments.iter().enumerate() {
            let d = q - self.breakpoints[j];
            if d > 0.0 {
                v += inc * d;
            }
        }
        v
    }
}

/// A fitted curve with its goodness-of-fit statistics.
///
/// Serializes to the curve JSON schema
/// `{breakpoints, intercept, slope_increments, ssr, r_squared, n_points}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub curve: PiecewiseLinearCurve,
    /// Sum of squared residuals, EUR^2/MWh^2 summed over points.
    pub ssr: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl FitReport {
    /// Interior breakpoints actually present in the returned curve
    /// (degenerate ones are collapsed, so this can be below the request).
    pub fn k_interior(&self) -> usize {
        self.curve.breakpoints.len().saturating_sub(2)
    }
}

pub(crate) fn validate_inputs(x: &[f64], y: &[f64], k_interior: usize) -> Result<(f64, f64), FitError> {
    validate(x, y, k_interior)
}

fn validate(x: &[f64], y: &[f64], k_interior: usize) -> Result<(f64, f64), FitError> {
    if x.len() != y.len() {
        return Err(FitError::LengthMismatch { x: x.len(), y: y.len() });
    }
    let needed = 2 * (k_interior + 2);
    if x.len() < needed {
        return Err(FitError::TooFewPoints { needed, got: x.len() });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let xmin = x.iter().copied().fold(f64::INFINITY, f64::min);
    let xmax = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xmax <= xmin {
        return Err(FitError::DegenerateRange);
    }
    Ok((xmin, xmax))
}

/// Assemble the reported curve from a tent solution, collapsing
/// zero-width segments.
fn build_report(x: &[f64], y: &[f64], full_breakpoints: &[f64], fit: &nnls::TentFit) -> FitReport {
    let mut breakpoints = vec![full_breakpoints[0]];
    let mut slopes = Vec::new();
    for t in 0..fit.slopes.len() {
        if full_breakpoints[t + 1] > full_breakpoints[t] {
            breakpoints.push(full_breakpoints[t + 1]);
            slopes.push(fit.slopes[t]);
        }
    }
    let mut increments = Vec::with_capacity(slopes.len());
    let mut prev = 0.0;
    for s in &slopes {
        increments.push(s - prev);
        prev = *s;
    }
    let curve = PiecewiseLinearCurve {
        breakpoints,
        intercept: fit.intercept,
        slope_increments: increments,
    };
    let ssr = nnls::direct_ssr(x, y, full_breakpoints, fit).max(0.0);
    let n = x.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let syy: f64 = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ssr / syy).clamp(0.0, 1.0)
    } else if ssr <= f64::EPSILON * n {
        1.0
    } else {
        0.0
    };
    FitReport {
        curve,
        ssr,
        r_squared,
        n_points: x.len(),
    }
}

/// Solve the constrained fit at an explicit interior breakpoint placement.
/// Shared by `fit_fixed` and the grid-search oracle.
pub(crate) fn solve_placement(x: &[f64], y: &[f64], xmin: f64, xmax: f64, interior: &[f64]) -> FitReport {
    let mut bps = Vec::with_capacity(interior.len() + 2);
    bps.push(xmin);
    bps.extend_from_slice(interior);
    bps.push(xmax);
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let fit = nnls::solve_tents(x, y, &bps);
    build_report(x, y, &bps, &fit)
}

/// Least-squares piecewise-linear fit with `k_interior` interior
/// breakpoints, endpoint breakpoints pinned to the data range, and
/// non-negative segment slopes.
///
/// For `k_interior = 0` this is the slope-clamped simple regression.
pub fn fit_fixed(x: &[f64], y: &[f64], k_interior: usize, search: &SearchConfig) -> Result<FitReport, FitError> {
    let (xmin, xmax) = validate(x, y, k_interior)?;
    if k_interior == 0 {
        return Ok(solve_placement(x, y, xmin, xmax, &[]));
    }
    // The (k-1)-solution seeds one start, which embeds it in the k-space
    // and keeps ssr monotone in k.
    let nested = fit_fixed(x, y, k_interior - 1, search)?;
    let nested_interior: Vec<f64> = {
        let b = nested.curve.breakpoints();
        b[1..b.len() - 1].to_vec()
    };
    let placement = search::search_interior(x, y, xmin, xmax, k_interior, &nested_interior, search);
    let report = solve_placement(x, y, xmin, xmax, &placement.interior);
    // Guard against descent noise: never report worse than the nested fit.
    if nested.ssr < report.ssr {
        return Ok(nested);
    }
    Ok(report)
}

/// Adaptive fit: start with a straight line and add one interior
/// breakpoint at a time, keeping the richer model only while each step
/// cuts the sum of squared residuals by at least `min_rel_improvement`.
pub fn fit_adaptive(
    x: &[f64],
    y: &[f64],
    k_max: usize,
    min_rel_improvement: f64,
    search: &SearchConfig,
) -> Result<FitReport, FitError> {
    if !(min_rel_improvement > 0.0 && min_rel_improvement < 1.0) {
        return Err(FitError::InvalidParameter(format!(
            "min_rel_improvement must be in (0, 1), got {min_rel_improvement}"
        )));
    }
    let mut current = fit_fixed(x, y, 0, search)?;
    for k in 1..=k_max {
        if current.ssr == 0.0 {
            break;
        }
        let richer = fit_fixed(x, y, k, search)?;
        if (current.ssr - richer.ssr) / current.ssr >= min_rel_improvement {
            current = richer;
        } else {
            break;
        }
    }
    Ok(current)
}
