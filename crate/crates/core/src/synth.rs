//! Synthetic market generator with known ground truth, plus the
//! brute-force oracles (exhaustive partitioning, grid-search PWLF) used
//! by the test suite.
//!
//! Hourly equilibria are generated as `p = curve(q) + noise` with `q`
//! drawn from a deterministic hour-of-day/day-of-week demand profile plus
//! seeded noise, so fitted curves can be checked against their
//! generators. An accompanying two-driver panel shifts its mean at
//! exactly the true changepoints, giving cause-driven specs a
//! recoverable signal. Everything is reproducible from the seed.

use chrono::{Datelike, NaiveDate, TimeZone, Utc, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{curve_distance, RegimeCurveSet, SupportPolicy};
use crate::market_data::{
    to_equilibrium_series, DailyDriver, DriverPanel, DriverUnits, EquilibriumSeries, GapPolicy,
    HourlyObservation, Scale,
};
use crate::pelt::{CostError, SegmentCost, Segmentation};
use crate::pwlf::{self, FitReport, PiecewiseLinearCurve};

/// Largest day count accepted by the exhaustive partition oracle.
pub const BRUTE_FORCE_MAX_DAYS: usize = 15;
/// Largest distinct-x count accepted by the grid PWLF oracle.
pub const GRID_ORACLE_MAX_POINTS: usize = 50;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("input of size {got} exceeds the oracle limit {max}")]
    TooLarge { got: usize, max: usize },
    #[error("oracle does not support this request: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// One true regime: a duration and the supply curve that generates its
/// equilibria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub length_days: usize,
    pub curve: PiecewiseLinearCurve,
}

/// Deterministic residual-load profile plus seeded noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandProcess {
    /// Profile trough, MW (reached at 03:00 UTC).
    pub q_low: f64,
    /// Profile peak, MW (reached at 15:00 UTC).
    pub q_high: f64,
    /// Weekend reduction as a fraction of the profile span.
    pub weekend_dip_frac: f64,
    /// Hourly residual-load noise, MW.
    pub load_noise_std: f64,
    /// Hourly price noise on the curve output, EUR/MWh.
    pub price_noise_std: f64,
}

impl Default for DemandProcess {
    fn default() -> Self {
        Self {
            q_low: 30_000.0,
            q_high: 75_000.0,
            weekend_dip_frac: 0.1,
            load_noise_std: 1_500.0,
            price_noise_std: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub regimes: Vec<RegimeSpec>,
    #[serde(default)]
    pub demand: DemandProcess,
    /// Daily noise on the synthetic driver panel.
    #[serde(default = "default_driver_noise")]
    pub driver_noise_std: f64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    pub seed: u64,
}

fn default_driver_noise() -> f64 {
    1.0
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 1).unwrap()
}

/// A generated market with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedMarket {
    /// Raw hourly stream, emittable in the ingestion CSV format.
    pub hourly: Vec<HourlyObservation>,
    pub series: EquilibriumSeries,
    pub panel: DriverPanel,
    /// Last day index of each regime except the final one; matches the
    /// changepoint convention of [`Segmentation`].
    pub true_changepoints: Vec<usize>,
}

fn validate_scenario(s: &SyntheticScenario) -> Result<(), SynthError> {
    if s.regimes.is_empty() {
        return Err(SynthError::InvalidScenario("need at least one regime".into()));
    }
    if s.regimes.iter().any(|r| r.length_days == 0) {
        return Err(SynthError::InvalidScenario("regime lengths must be >= 1 day".into()));
    }
    let d = &s.demand;
    for (name, v) in [
        ("q_low", d.q_low),
        ("q_high", d.q_high),
        ("weekend_dip_frac", d.weekend_dip_frac),
        ("load_noise_std", d.load_noise_std),
        ("price_noise_std", d.price_noise_std),
        ("driver_noise_std", s.driver_noise_std),
    ] {
        if !v.is_finite() {
            return Err(SynthError::InvalidScenario(format!("{name} is not finite")));
        }
    }
    if d.q_low >= d.q_high {
        return Err(SynthError::InvalidScenario("q_low must be below q_high".into()));
    }
    if d.load_noise_std < 0.0 || d.price_noise_std < 0.0 || s.driver_noise_std < 0.0 {
        return Err(SynthError::InvalidScenario("noise levels must be >= 0".into()));
    }
    Ok(())
}

fn sample_noise(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).unwrap().sample(rng)
    } else {
        0.0
    }
}

/// Mean of a curve over `[q_low, q_high]`, used as the regime level of
/// the synthetic driver panel.
fn curve_level(curve: &PiecewiseLinearCurve, q_low: f64, q_high: f64) -> f64 {
    let samples = 9;
    (0..samples)
        .map(|i| curve.evaluate(q_low + (q_high - q_low) * i as f64 / (samples - 1) as f64))
        .sum::<f64>()
        / samples as f64
}

/// Generate a market from a scenario. Same seed, same output, bitwise.
pub fn generate(scenario: &SyntheticScenario) -> Result<GeneratedMarket, SynthError> {
    validate_scenario(scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let demand = &scenario.demand;
    let span = demand.q_high - demand.q_low;

    let total_days: usize = scenario.regimes.iter().map(|r| r.length_days).sum();
    let mut regime_of_day = Vec::with_capacity(total_days);
    for (r, spec) in scenario.regimes.iter().enumerate() {
        regime_of_day.extend(std::iter::repeat(r).take(spec.length_days));
    }

    let mut hourly = Vec::with_capacity(total_days * 24);
    for day in 0..total_days {
        let date = scenario.start_date + chrono::Duration::days(day as i64);
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let curve = &scenario.regimes[regime_of_day[day]].curve;
        for hour in 0..24u32 {
            let phase = (hour as f64 - 3.0) / 24.0 * std::f64::consts::TAU;
            let mut q = demand.q_low + span * (0.5 - 0.5 * phase.cos());
            if weekend {
                q -= demand.weekend_dip_frac * span;
            }
            q += sample_noise(&mut rng, demand.load_noise_std);
            q = q.max(0.0);
            let price = curve.evaluate(q) + sample_noise(&mut rng, demand.price_noise_std);

            // Deterministic renewable decomposition so the bundle carries
            // realistic columns; residual load recovers q.
            let t = (day * 24 + hour as usize) as f64;
            let wind = 4_000.0 * (0.55 + 0.45 * (t / 37.0 + 0.9).sin());
            let solar = if (6..18).contains(&hour) {
                3_000.0 * ((hour as f64 - 6.0) / 12.0 * std::f64::consts::PI).sin()
            } else {
                0.0
            };
            let hydro_ror = 1_500.0;
            hourly.push(HourlyObservation {
                timestamp: Utc.from_utc_datetime(&date.and_hms_opt(hour, 0, 0).unwrap()),
                price,
                load: q + wind + solar + hydro_ror,
                wind,
                solar,
                hydro_ror,
            });
        }
    }

    let levels: Vec<f64> = scenario
        .regimes
        .iter()
        .map(|r| curve_level(&r.curve, demand.q_low, demand.q_high))
        .collect();
    let mut drivers = Vec::new();
    for name in ["synthetic_fuel_a", "synthetic_fuel_b"] {
        let values: Vec<f64> = (0..total_days)
            .map(|day| levels[regime_of_day[day]] + sample_noise(&mut rng, scenario.driver_noise_std))
            .collect();
        drivers.push(DailyDriver {
            name: name.into(),
            values,
            units: DriverUnits::EurPerMwhThermal,
            scale: Scale::Levels,
        });
    }
    let panel = DriverPanel::custom(drivers).expect("drivers share the scenario length");

    let series = to_equilibrium_series(&hourly, GapPolicy::Fail).expect("generator emits complete days");

    let mut true_changepoints = Vec::new();
    let mut acc = 0usize;
    for spec in &scenario.regimes[..scenario.regimes.len() - 1] {
        acc += spec.length_days;
        true_changepoints.push(acc - 1);
    }

    Ok(GeneratedMarket {
        hourly,
        series,
        panel,
        true_changepoints,
    })
}

/// Global optimum by exhaustive enumeration of all partitions respecting
/// the cost's minimum segment length. Oracle for the segmentation engine;
/// limited to [`BRUTE_FORCE_MAX_DAYS`].
pub fn brute_force_partition(
    cost: &dyn SegmentCost,
    n_days: usize,
    penalty: f64,
) -> Result<Segmentation, SynthError> {
    if n_days > BRUTE_FORCE_MAX_DAYS {
        return Err(SynthError::TooLarge {
            got: n_days,
            max: BRUTE_FORCE_MAX_DAYS,
        });
    }
    if n_days == 0 {
        return Err(SynthError::InvalidScenario("n_days must be >= 1".into()));
    }
    let min_len = cost.min_segment_length().max(1);
    let mut best: Option<(f64, Vec<usize>, f64)> = None;
    // Bit i of the mask cuts after day i.
    for mask in 0u32..(1u32 << (n_days - 1)) {
        let mut cps = Vec::new();
        for day in 0..n_days - 1 {
            if mask & (1 << day) != 0 {
                cps.push(day);
            }
        }
        let mut feasible = true;
        let mut cost_sum = 0.0;
        let mut first = 0usize;
        for &cp in cps.iter().chain(std::iter::once(&(n_days - 1))) {
            if cp + 1 - first < min_len {
                feasible = false;
                break;
            }
            cost_sum += cost.cost(first, cp)?;
            first = cp + 1;
        }
        if !feasible {
            continue;
        }
        let total = cost_sum + penalty * (cps.len() + 1) as f64;
        if best.as_ref().map_or(true, |(b, _, _)| total < *b) {
            best = Some((total, cps, cost_sum));
        }
    }
    let (_, changepoints, cost_sum) = best.ok_or_else(|| {
        SynthError::InvalidScenario(format!(
            "no partition of {n_days} day(s) satisfies min segment length {min_len}"
        ))
    })?;
    Ok(Segmentation::from_parts(changepoints, n_days, penalty, cost_sum))
}

/// Dense grid search over interior breakpoints placed at midpoints of
/// consecutive distinct x values, each cell solved by the same
/// constrained inner solver as `fit_fixed`. Bounds the outer search's
/// quality in tests.
pub fn grid_pwlf_oracle(x: &[f64], y: &[f64], k_interior: usize) -> Result<FitReport, SynthError> {
    if !(1..=2).contains(&k_interior) {
        return Err(SynthError::Unsupported(format!(
            "grid oracle covers k_interior in {{1, 2}}, got {k_interior}"
        )));
    }
    let (xmin, xmax) = pwlf::validate_inputs(x, y, k_interior)
        .map_err(|e| SynthError::InvalidScenario(e.to_string()))?;
    let mut distinct: Vec<f64> = x.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() > GRID_ORACLE_MAX_POINTS {
        return Err(SynthError::TooLarge {
            got: distinct.len(),
            max: GRID_ORACLE_MAX_POINTS,
        });
    }
    let midpoints: Vec<f64> = distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let mut best: Option<(Vec<f64>, FitReport)> = None;
    let mut consider = |interior: Vec<f64>, x: &[f64], y: &[f64]| {
        let report = pwlf::solve_placement(x, y, xmin, xmax, &interior);
        let replace = match &best {
            None => true,
            Some((bi, br)) => {
                let tol = 1e-9 * br.ssr.max(report.ssr).max(f64::MIN_POSITIVE);
                report.ssr < br.ssr - tol || (report.ssr < br.ssr + tol && interior < *bi)
            }
        };
        if replace {
            best = Some((interior, report));
        }
    };
    match k_interior {
        1 => {
            for &m in &midpoints {
                consider(vec![m], x, y);
            }
        }
        _ => {
            for i in 0..midpoints.len() {
                for j in i..midpoints.len() {
                    consider(vec![midpoints[i], midpoints[j]], x, y);
                }
            }
        }
    }
    Ok(best.expect("at least one placement").1)
}

/// Changepoint recovery quality of a found segmentation against ground
/// truth: greedy one-to-one matching within a day tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    /// Per true shift, the day error of its matched detection; `None`
    /// when missed.
    pub shift_day_errors: Vec<Option<usize>>,
    pub missed: usize,
    pub spurious: usize,
    /// Mean absolute price error per regime against the generating
    /// curves, when computable (regime counts must line up).
    pub curve_errors: Vec<f64>,
}

pub fn score_recovery(found: &[usize], truth: &[usize], tolerance_days: usize) -> RecoveryScore {
    let mut pairs = Vec::new();
    for (ti, &t) in truth.iter().enumerate() {
        for (fi, &f) in found.iter().enumerate() {
            let d = t.abs_diff(f);
            if d <= tolerance_days {
                pairs.push((d, ti, fi));
            }
        }
    }
    pairs.sort_unstable();
    let mut truth_used = vec![false; truth.len()];
    let mut found_used = vec![false; found.len()];
    let mut shift_day_errors = vec![None; truth.len()];
    for (d, ti, fi) in pairs {
        if !truth_used[ti] && !found_used[fi] {
            truth_used[ti] = true;
            found_used[fi] = true;
            shift_day_errors[ti] = Some(d);
        }
    }
    RecoveryScore {
        missed: truth_used.iter().filter(|u| !**u).count(),
        spurious: found_used.iter().filter(|u| !**u).count(),
        shift_day_errors,
        curve_errors: Vec::new(),
    }
}

/// Mean absolute price error of each fitted regime curve against its
/// generator, over the intersection of their supports. Requires the
/// fitted regime count to match the scenario's.
pub fn curve_recovery_errors(fitted: &RegimeCurveSet, truth: &[RegimeSpec]) -> Option<Vec<f64>> {
    if fitted.curves.len() != truth.len() {
        return None;
    }
    let mut errors = Vec::with_capacity(truth.len());
    for (fit, spec) in fitted.curves.iter().zip(truth) {
        let err = curve_distance(
            &fit.curve,
            &spec.curve,
            fit.curve.support(),
            spec.curve.support(),
            SupportPolicy::Intersection,
        )
        .ok()?;
        errors.push(err);
    }
    Some(errors)
}
