//! Loading, validation and transformation of raw market files into the
//! inputs of the segmentation engine.
//!
//! Hourly CSV files carry day-ahead price, system load and variable
//! renewable generation; daily CSV files carry fuel/carbon prices and
//! available capacity. All calendar handling is in UTC, so every day has
//! exactly 24 hours and "day" boundaries are UTC midnight.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default carbon intensity of natural gas, tCO2 per thermal MWh.
pub const DEFAULT_GAS_INTENSITY: f64 = 0.201;
/// Default carbon intensity of hard coal, tCO2 per thermal MWh.
pub const DEFAULT_COAL_INTENSITY: f64 = 0.338;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(DateTime<Utc>),
    #[error("timestamps not strictly increasing at {0}")]
    NonMonotonicTime(DateTime<Utc>),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("gap of {hours} missing hour(s) before {at} exceeds the `{policy}` policy")]
    GapTooLarge {
        at: DateTime<Utc>,
        hours: usize,
        policy: String,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("negative input: {0}")]
    NegativeInput(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("daily series `{name}` has no value at or before calendar start {start}")]
    LeadingGap { name: String, start: NaiveDate },
    #[error("daily series `{name}` has no value for {date} under the fail policy")]
    GapFound { name: String, date: NaiveDate },
    #[error("duplicate date {date} in daily series `{name}`")]
    DuplicateDate { name: String, date: NaiveDate },
    #[error("series `{0}` has zero variance, cannot normalize")]
    ZeroVariance(String),
    #[error("specification {spec} requires driver `{name}`")]
    MissingDriver { spec: PanelSpec, name: String },
    #[error("driver `{name}` has {got} values, expected {expected}")]
    LengthMismatch {
        name: String,
        got: usize,
        expected: usize,
    },
}

/// One hour of market data, UTC hour resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyObservation {
    pub timestamp: DateTime<Utc>,
    /// Day-ahead clearing price, EUR/MWh. May be negative.
    pub price: f64,
    /// Total system load, MW.
    pub load: f64,
    /// Wind generation, MW.
    pub wind: f64,
    /// Solar generation, MW.
    pub solar: f64,
    /// Run-of-river hydro generation (no storage), MW.
    pub hydro_ror: f64,
}

/// One hourly market equilibrium after the residual-load transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumObs {
    pub day_index: usize,
    pub hour_of_day: u8,
    /// EUR/MWh.
    pub price: f64,
    /// load - wind - solar - hydro_ror, MW.
    pub residual_load: f64,
}

/// Hourly price/residual-load pairs grouped by day.
///
/// Observations are stored sorted by `(day_index, hour_of_day)` with an
/// offset table so the engine can slice any day range in O(1). The series
/// is immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSeries {
    observations: Vec<EquilibriumObs>,
    day_dates: Vec<NaiveDate>,
    day_offsets: Vec<usize>,
}

impl EquilibriumSeries {
    /// Number of days n. Every `day_index` in `[0, n)` appears.
    pub fn days(&self) -> usize {
        self.day_dates.len()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[EquilibriumObs] {
        &self.observations
    }

    /// Calendar dates of each day index.
    pub fn day_dates(&self) -> &[NaiveDate] {
        &self.day_dates
    }

    pub fn start_date(&self) -> NaiveDate {
        self.day_dates[0]
    }

    /// All observations with day index in `first..=last`.
    pub fn day_range(&self, first: usize, last: usize) -> &[EquilibriumObs] {
        &self.observations[self.day_offsets[first]..self.day_offsets[last + 1]]
    }
}

/// A daily driver series, one value per day index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyDriver {
    pub name: String,
    pub values: Vec<f64>,
    pub units: DriverUnits,
    pub scale: Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriverUnits {
    EurPerMwhThermal,
    Megawatt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Levels,
    Normalized,
}

/// Carbon intensity factor of a fuel, tCO2 per thermal MWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonIntensity {
    pub fuel: String,
    pub factor: f64,
}

impl CarbonIntensity {
    pub fn gas() -> Self {
        Self {
            fuel: "gas".into(),
            factor: DEFAULT_GAS_INTENSITY,
        }
    }

    pub fn coal() -> Self {
        Self {
            fuel: "coal".into(),
            factor: DEFAULT_COAL_INTENSITY,
        }
    }
}

/// Cause-driven specification id. Determines which drivers enter the panel
/// and on which scale (C1 levels, C2/C3 normalized).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PanelSpec {
    C1,
    C2,
    C3,
    Custom,
}

impl std::fmt::Display for PanelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PanelSpec::C1 => write!(f, "C1"),
            PanelSpec::C2 => write!(f, "C2"),
            PanelSpec::C3 => write!(f, "C3"),
            PanelSpec::Custom => write!(f, "custom"),
        }
    }
}

impl FromStr for PanelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C1" | "c1" => Ok(PanelSpec::C1),
            "C2" | "c2" => Ok(PanelSpec::C2),
            "C3" | "c3" => Ok(PanelSpec::C3),
            "custom" => Ok(PanelSpec::Custom),
            other => Err(format!("unknown panel specification `{other}`")),
        }
    }
}

/// Ordered list of daily drivers sharing length and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPanel {
    drivers: Vec<DailyDriver>,
    pub specification_id: PanelSpec,
}

impl DriverPanel {
    /// Panel from arbitrary series. All members must share one length.
    pub fn custom(drivers: Vec<DailyDriver>) -> Result<Self, MarketDataError> {
        if drivers.is_empty() {
            return Err(MarketDataError::EmptyInput);
        }
        let n = drivers[0].values.len();
        for d in &drivers {
            if d.values.len() != n {
                return Err(MarketDataError::LengthMismatch {
                    name: d.name.clone(),
                    got: d.values.len(),
                    expected: n,
                });
            }
        }
        Ok(Self {
            drivers,
            specification_id: PanelSpec::Custom,
        })
    }

    pub fn drivers(&self) -> &[DailyDriver] {
        &self.drivers
    }

    /// Number of days shared by all member series.
    pub fn days(&self) -> usize {
        self.drivers[0].values.len()
    }
}

/// Maps logical fields to CSV header names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub timestamp: String,
    pub price: String,
    pub load: String,
    pub wind: String,
    pub solar: String,
    pub hydro_ror: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            price: "price_eur_mwh".into(),
            load: "load_mw".into(),
            wind: "wind_mw".into(),
            solar: "solar_mw".into(),
            hydro_ror: "hydro_ror_mw".into(),
        }
    }
}

/// Policy for missing hours when building the equilibrium series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Any missing hour is an error.
    Fail,
    /// Linearly interpolate runs of up to 2 missing hours, else error.
    Interpolate,
    /// Drop days with any missing hour and reindex.
    DropDay,
}

impl std::fmt::Display for GapPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GapPolicy::Fail => write!(f, "fail"),
            GapPolicy::Interpolate => write!(f, "interpolate"),
            GapPolicy::DropDay => write!(f, "drop_day"),
        }
    }
}

/// Policy for market-closed days when aligning a daily series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    ForwardFill,
    Fail,
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&naive));
        }
    }
    None
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<f64, MarketDataError> {
    let raw = record.get(idx).unwrap_or("");
    let value: f64 = raw.trim().parse().map_err(|_| MarketDataError::Parse {
        row,
        message: format!("cannot parse `{raw}` as number for column `{name}`"),
    })?;
    if !value.is_finite() {
        return Err(MarketDataError::Parse {
            row,
            message: format!("non-finite value in column `{name}`"),
        });
    }
    Ok(value)
}

/// Load an hourly market CSV.
///
/// The file must have a header row containing all mapped columns and
/// ISO 8601 UTC timestamps at whole hours. Rows are returned sorted
/// chronologically; duplicate timestamps are rejected. Row numbers in
/// errors count the header as row 1.
pub fn load_hourly_csv(path: &Path, map: &ColumnMap) -> Result<Vec<HourlyObservation>, MarketDataError> {
    let file = File::open(path).map_err(|e| MarketDataError::Parse {
        row: 0,
        message: format!("cannot open {}: {e}", path.display()),
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| MarketDataError::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, MarketDataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
    };
    let ts_idx = col(&map.timestamp)?;
    let price_idx = col(&map.price)?;
    let load_idx = col(&map.load)?;
    let wind_idx = col(&map.wind)?;
    let solar_idx = col(&map.solar)?;
    let hydro_idx = col(&map.hydro_ror)?;

    let mut observations = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| MarketDataError::Parse {
            row,
            message: e.to_string(),
        })?;
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| MarketDataError::Parse {
            row,
            message: format!("cannot parse `{raw_ts}` as an ISO 8601 timestamp"),
        })?;
        if timestamp.minute() != 0 || timestamp.second() != 0 {
            return Err(MarketDataError::Parse {
                row,
                message: format!("timestamp `{raw_ts}` is not at hour resolution"),
            });
        }
        let price = parse_field(&record, price_idx, &map.price, row)?;
        let load = parse_field(&record, load_idx, &map.load, row)?;
        let wind = parse_field(&record, wind_idx, &map.wind, row)?;
        let solar = parse_field(&record, solar_idx, &map.solar, row)?;
        let hydro_ror = parse_field(&record, hydro_idx, &map.hydro_ror, row)?;
        for (name, v) in [
            (&map.load, load),
            (&map.wind, wind),
            (&map.solar, solar),
            (&map.hydro_ror, hydro_ror),
        ] {
            if v < 0.0 {
                return Err(MarketDataError::Parse {
                    row,
                    message: format!("column `{name}` must be non-negative, got {v}"),
                });
            }
        }
        observations.push(HourlyObservation {
            timestamp,
            price,
            load,
            wind,
            solar,
            hydro_ror,
        });
    }
    observations.sort_by_key(|o| o.timestamp);
    for pair in observations.windows(2) {
        if pair[0].timestamp == pair[1].timestamp {
            return Err(MarketDataError::DuplicateTimestamp(pair[0].timestamp));
        }
    }
    Ok(observations)
}

/// Write hourly observations in the exact format `load_hourly_csv` reads.
///
/// Numeric fields round-trip bit-identically (shortest-representation
/// float formatting).
pub fn write_hourly_csv(path: &Path, observations: &[HourlyObservation], map: &ColumnMap) -> Result<(), MarketDataError> {
    let file = File::create(path).map_err(|e| MarketDataError::Parse {
        row: 0,
        message: format!("cannot create {}: {e}", path.display()),
    })?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>, line: String| {
        out.write_all(line.as_bytes()).map_err(|e| MarketDataError::Parse {
            row: 0,
            message: e.to_string(),
        })
    };
    write(
        &mut out,
        format!(
            "{},{},{},{},{},{}\n",
            map.timestamp, map.price, map.load, map.wind, map.solar, map.hydro_ror
        ),
    )?;
    for o in observations {
        write(
            &mut out,
            format!(
                "{},{},{},{},{},{}\n",
                o.timestamp.format("%Y-%m-%dT%H:%M:%SZ"),
                o.price,
                o.load,
                o.wind,
                o.solar,
                o.hydro_ror
            ),
        )?;
    }
    out.flush().map_err(|e| MarketDataError::Parse {
        row: 0,
        message: e.to_string(),
    })?;
    Ok(())
}

fn interpolate_gap(before: &HourlyObservation, after: &HourlyObservation, at: DateTime<Utc>) -> HourlyObservation {
    let span = (after.timestamp - before.timestamp).num_hours() as f64;
    let frac = (at - before.timestamp).num_hours() as f64 / span;
    let lerp = |a: f64, b: f64| a + frac * (b - a);
    HourlyObservation {
        timestamp: at,
        price: lerp(before.price, after.price),
        load: lerp(before.load, after.load),
        wind: lerp(before.wind, after.wind),
        solar: lerp(before.solar, after.solar),
        hydro_ror: lerp(before.hydro_ror, after.hydro_ror),
    }
}

/// Transform sorted hourly observations into an [`EquilibriumSeries`].
///
/// Residual load is `load - wind - solar - hydro_ror` per hour. Day
/// boundaries are UTC midnight; days run from the first observation's
/// calendar date to the last's. Missing hours are handled per
/// `gap_policy`; under `DropDay`, incomplete days (including partial
/// first/last days) are removed and the remaining days reindexed.
pub fn to_equilibrium_series(
    observations: &[HourlyObservation],
    gap_policy: GapPolicy,
) -> Result<EquilibriumSeries, MarketDataError> {
    if observations.is_empty() {
        return Err(MarketDataError::EmptyInput);
    }
    for pair in observations.windows(2) {
        if pair[1].timestamp <= pair[0].timestamp {
            return Err(MarketDataError::NonMonotonicTime(pair[1].timestamp));
        }
    }
    let start_date = observations[0].timestamp.date_naive();
    let end_date = observations[observations.len() - 1].timestamp.date_naive();
    let n_days = (end_date - start_date).num_days() as usize + 1;
    let start_hour = Utc.from_utc_datetime(&start_date.and_hms_opt(0, 0, 0).unwrap());

    // Slot every observation into the full hourly grid.
    let total_hours = n_days * 24;
    let mut grid: Vec<Option<HourlyObservation>> = vec![None; total_hours];
    for o in observations {
        let slot = (o.timestamp - start_hour).num_hours() as usize;
        grid[slot] = Some(*o);
    }

    match gap_policy {
        GapPolicy::Fail => {
            if let Some(slot) = grid.iter().position(|g| g.is_none()) {
                let at = start_hour + chrono::Duration::hours(slot as i64);
                let hours = grid[slot..].iter().take_while(|g| g.is_none()).count();
                return Err(MarketDataError::GapTooLarge {
                    at,
                    hours,
                    policy: "fail".into(),
                });
            }
        }
        GapPolicy::Interpolate => {
            let mut slot = 0;
            while slot < total_hours {
                if grid[slot].is_some() {
                    slot += 1;
                    continue;
                }
                let run = grid[slot..].iter().take_while(|g| g.is_none()).count();
                let at = start_hour + chrono::Duration::hours(slot as i64);
                if run > 2 || slot == 0 || slot + run >= total_hours {
                    return Err(MarketDataError::GapTooLarge {
                        at,
                        hours: run,
                        policy: "interpolate".into(),
                    });
                }
                let before = grid[slot - 1].unwrap();
                let after = grid[slot + run].unwrap();
                for k in 0..run {
                    let ts = start_hour + chrono::Duration::hours((slot + k) as i64);
                    grid[slot + k] = Some(interpolate_gap(&before, &after, ts));
                }
                slot += run;
            }
        }
        GapPolicy::DropDay => {}
    }

    let mut obs = Vec::new();
    let mut day_dates = Vec::new();
    let mut day_offsets = vec![0usize];
    for day in 0..n_days {
        let slots = &grid[day * 24..(day + 1) * 24];
        if slots.iter().any(|s| s.is_none()) {
            debug_assert_eq!(gap_policy, GapPolicy::DropDay);
            continue;
        }
        let day_index = day_dates.len();
        for (h, o) in slots.iter().enumerate() {
            let o = o.as_ref().unwrap();
            obs.push(EquilibriumObs {
                day_index,
                hour_of_day: h as u8,
                price: o.price,
                residual_load: o.load - o.wind - o.solar - o.hydro_ror,
            });
        }
        day_dates.push(start_date + chrono::Duration::days(day as i64));
        day_offsets.push(obs.len());
    }
    if day_dates.is_empty() {
        return Err(MarketDataError::EmptyInput);
    }
    Ok(EquilibriumSeries {
        observations: obs,
        day_dates,
        day_offsets,
    })
}

/// Carbon-adjusted fuel price: `fuel_price + factor * eua_price`,
/// EUR per thermal MWh.
pub fn carbon_adjust(fuel_price: f64, eua_price: f64, intensity: &CarbonIntensity) -> Result<f64, MarketDataError> {
    for (name, v) in [
        ("fuel_price", fuel_price),
        ("eua_price", eua_price),
        ("intensity.factor", intensity.factor),
    ] {
        if !v.is_finite() {
            return Err(MarketDataError::NonFinite(name.into()));
        }
        if v < 0.0 {
            return Err(MarketDataError::NegativeInput(format!("{name} = {v}")));
        }
    }
    Ok(fuel_price + intensity.factor * eua_price)
}

/// Result of aligning a dated series onto a day calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDaily {
    pub driver: DailyDriver,
    /// Days filled by the policy rather than observed.
    pub filled: usize,
}

/// Align a dated value series onto `n_days` consecutive days starting at
/// `start`. Market-closed days are filled per `fill_policy`.
pub fn align_daily(
    name: &str,
    units: DriverUnits,
    series: &[(NaiveDate, f64)],
    start: NaiveDate,
    n_days: usize,
    fill_policy: FillPolicy,
) -> Result<AlignedDaily, MarketDataError> {
    if series.is_empty() || n_days == 0 {
        return Err(MarketDataError::EmptyInput);
    }
    let mut by_date = BTreeMap::new();
    for &(date, value) in series {
        if by_date.insert(date, value).is_some() {
            return Err(MarketDataError::DuplicateDate {
                name: name.into(),
                date,
            });
        }
    }
    let mut values = Vec::with_capacity(n_days);
    let mut filled = 0usize;
    let mut last: Option<f64> = by_date.range(..start).next_back().map(|(_, &v)| v);
    for offset in 0..n_days {
        let date = start + chrono::Duration::days(offset as i64);
        match by_date.get(&date) {
            Some(&v) => {
                last = Some(v);
                values.push(v);
            }
            None => match fill_policy {
                FillPolicy::Fail => {
                    return Err(MarketDataError::GapFound {
                        name: name.into(),
                        date,
                    })
                }
                FillPolicy::ForwardFill => match last {
                    Some(v) => {
                        filled += 1;
                        values.push(v);
                    }
                    None => {
                        return Err(MarketDataError::LeadingGap {
                            name: name.into(),
                            start,
                        })
                    }
                },
            },
        }
    }
    Ok(AlignedDaily {
        driver: DailyDriver {
            name: name.into(),
            values,
            units,
            scale: Scale::Levels,
        },
        filled,
    })
}

/// Read a `date,value` daily CSV with ISO dates.
pub fn load_daily_csv(path: &Path) -> Result<Vec<(NaiveDate, f64)>, MarketDataError> {
    let file = File::open(path).map_err(|e| MarketDataError::Parse {
        row: 0,
        message: format!("cannot open {}: {e}", path.display()),
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| MarketDataError::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let date_idx = headers
        .iter()
        .position(|h| h == "date")
        .ok_or_else(|| MarketDataError::MissingColumn("date".into()))?;
    let value_idx = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| MarketDataError::MissingColumn("value".into()))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| MarketDataError::Parse {
            row,
            message: e.to_string(),
        })?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| MarketDataError::Parse {
            row,
            message: format!("cannot parse `{raw_date}` as an ISO date"),
        })?;
        let value = parse_field(&record, value_idx, "value", row)?;
        rows.push((date, value));
    }
    Ok(rows)
}

/// Z-score a driver: subtract the mean, divide by the population standard
/// deviation. Idempotent within 1e-9.
pub fn normalize(driver: &DailyDriver) -> Result<DailyDriver, MarketDataError> {
    let n = driver.values.len();
    if n == 0 {
        return Err(MarketDataError::EmptyInput);
    }
    let mean = driver.values.iter().sum::<f64>() / n as f64;
    let var = driver.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(MarketDataError::ZeroVariance(driver.name.clone()));
    }
    Ok(DailyDriver {
        name: driver.name.clone(),
        values: driver.values.iter().map(|v| (v - mean) / std).collect(),
        units: driver.units,
        scale: Scale::Normalized,
    })
}

/// Canonical driver names consumed by [`build_panel`].
pub mod driver_names {
    /// Carbon-adjusted coal price, EUR/MWh thermal.
    pub const COAL: &str = "coal";
    /// Carbon-adjusted gas price, EUR/MWh thermal.
    pub const GAS: &str = "gas";
    /// Total available conventional capacity, MW.
    pub const CAPACITY_TOTAL: &str = "capacity_total";
    /// Available nuclear capacity, MW.
    pub const CAPACITY_NUCLEAR: &str = "capacity_nuclear";
    /// Available lignite capacity, MW.
    pub const CAPACITY_LIGNITE: &str = "capacity_lignite";
}

/// Assemble the driver panel of a cause-driven specification.
///
/// Inputs must be level series sharing one length. C1 keeps the
/// carbon-adjusted coal and gas prices in levels; C2 adds total available
/// capacity and C3 swaps it for nuclear and lignite capacity, both on the
/// normalized scale.
pub fn build_panel(
    spec: PanelSpec,
    available: &BTreeMap<String, DailyDriver>,
) -> Result<DriverPanel, MarketDataError> {
    use driver_names::*;
    let required: &[&str] = match spec {
        PanelSpec::C1 => &[COAL, GAS],
        PanelSpec::C2 => &[COAL, GAS, CAPACITY_TOTAL],
        PanelSpec::C3 => &[COAL, GAS, CAPACITY_NUCLEAR, CAPACITY_LIGNITE],
        PanelSpec::Custom => {
            let drivers: Vec<_> = available.values().cloned().collect();
            let mut panel = DriverPanel::custom(drivers)?;
            panel.specification_id = PanelSpec::Custom;
            return Ok(panel);
        }
    };
    let mut drivers = Vec::with_capacity(required.len());
    for &name in required {
        let driver = available.get(name).ok_or_else(|| MarketDataError::MissingDriver {
            spec,
            name: name.into(),
        })?;
        drivers.push(match spec {
            PanelSpec::C1 => driver.clone(),
            _ => normalize(driver)?,
        });
    }
    let n = drivers[0].values.len();
    for d in &drivers {
        if d.values.len() != n {
            return Err(MarketDataError::LengthMismatch {
                name: d.name.clone(),
                got: d.values.len(),
                expected: n,
            });
        }
    }
    Ok(DriverPanel {
        drivers,
        specification_id: spec,
    })
}
