//! Detection of stable supply regimes in wholesale electricity market time
//! series and estimation of one monotone piecewise-linear supply curve per
//! regime.
//!
//! The pipeline has three stages:
//!
//! 1. [`market_data`] loads hourly market files and daily commodity/capacity
//!    files and turns them into an [`market_data::EquilibriumSeries`] (hourly
//!    price paired with residual load) and a [`market_data::DriverPanel`]
//!    (daily supply drivers).
//! 2. [`pelt`] segments the day axis into regimes by exact penalized
//!    changepoint detection, generic over a [`pelt::SegmentCost`]. The two
//!    cost families live in [`cost`]: within-segment variance over a driver
//!    panel (cause-driven, specs C1-C3) and the sum of squared residuals of
//!    a constrained piecewise-linear fit over hourly equilibria
//!    (effect-driven, specs E1-E3).
//! 3. [`analysis`] sweeps the penalty to pick a regime count, fits one
//!    supply curve per regime with [`pwlf`], and compares regimes pairwise
//!    by the area between their curves.
//!
//! [`synth`] generates synthetic markets with known ground truth and hosts
//! the brute-force oracles used by the test suite.

pub mod analysis;
pub mod cost;
pub mod market_data;
pub mod pelt;
pub mod pwlf;
pub mod synth;
