//! Long-horizon forecasts under lockdown scenarios.
//!
//! A scenario replaces unobserved future mobility with per-weekday averages
//! taken from a historical interval; counts are bootstrapped from the
//! model's own predictions and vaccinations are held at their last observed
//! value.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data::{ModelConfig, RegionRecord};
use crate::error::{Error, Result};
use crate::forecast::{Dynamics, ForecastMode, NetworkRepro};
use crate::model::HawkesParams;

/// Inclusive calendar range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateInterval {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateInterval {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::Argument(format!("interval end {end} precedes start {start}")));
        }
        Ok(DateInterval { start, end })
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> {
        self.start.iter_days().take_while({
            let end = self.end;
            move |d| *d <= end
        })
    }
}

/// Weekday number with 1 = Sunday through 7 = Saturday.
pub fn weekday_number(date: NaiveDate) -> usize {
    date.weekday().num_days_from_sunday() as usize + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTable {
    pub name: String,
    /// `weekday_mobility[i - 1]` is the mean mobility on weekday `i`
    /// (1 = Sunday).
    pub weekday_mobility: [Vec<f64>; 7],
    pub source_interval: DateInterval,
    /// Weekdays absent from the source interval; they use the mean over
    /// every day of the interval.
    pub borrowed_weekdays: Vec<usize>,
}

impl ScenarioTable {
    pub fn mobility_for(&self, date: NaiveDate) -> &[f64] {
        &self.weekday_mobility[weekday_number(date) - 1]
    }

    /// Mean of the seven weekday vectors.
    pub fn average(&self) -> Vec<f64> {
        let dim = self.weekday_mobility[0].len();
        (0..dim)
            .map(|j| self.weekday_mobility.iter().map(|m| m[j]).sum::<f64>() / 7.0)
            .collect()
    }
}

/// Per-weekday mean of the mobility rows inside `interval`.
///
/// `mobility[k]` is the observation on `start_date + k`. Every date of the
/// interval must be observed.
pub fn weekday_mobility(name: &str, start_date: NaiveDate, mobility: &[Vec<f64>], interval: DateInterval) -> Result<ScenarioTable> {
    if mobility.is_empty() {
        return Err(Error::Argument("no mobility history".into()));
    }
    let history_last = start_date + chrono::Days::new(mobility.len() as u64 - 1);
    let mut missing = interval.dates().filter(|d| *d < start_date || *d > history_last);
    if let Some(first) = missing.next() {
        let last = missing.last().unwrap_or(first);
        return Err(Error::DatesOutOfHistory {
            first,
            last,
            history_first: start_date,
            history_last,
        });
    }
    let dim = mobility[0].len();
    let mut sums = vec![vec![0.0; dim]; 7];
    let mut counts = [0usize; 7];
    let mut overall = vec![0.0; dim];
    let mut total = 0usize;
    for date in interval.dates() {
        let row = &mobility[(date - start_date).num_days() as usize];
        let k = weekday_number(date) - 1;
        for j in 0..dim {
            sums[k][j] += row[j];
            overall[j] += row[j];
        }
        counts[k] += 1;
        total += 1;
    }
    let overall: Vec<f64> = overall.into_iter().map(|v| v / total as f64).collect();
    let mut borrowed = Vec::new();
    let weekday_mobility = std::array::from_fn(|k| {
        if counts[k] == 0 {
            borrowed.push(k + 1);
            overall.clone()
        } else {
            sums[k].iter().map(|s| s / counts[k] as f64).collect()
        }
    });
    if !borrowed.is_empty() {
        log::warn!(
            "scenario `{name}`: weekdays {borrowed:?} do not occur in {}..={}, using the interval mean",
            interval.start,
            interval.end
        );
    }
    Ok(ScenarioTable {
        name: name.to_owned(),
        weekday_mobility,
        source_interval: interval,
        borrowed_weekdays: borrowed,
    })
}

pub fn table_from_record(record: &RegionRecord, name: &str, interval: DateInterval) -> Result<ScenarioTable> {
    weekday_mobility(name, record.start_date(), record.mobility(), interval)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub interval: DateInterval,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid preset date")
}

/// The four historical lockdown conditions.
pub fn builtin_presets() -> Vec<Preset> {
    let preset = |name, description, start, end| Preset {
        name,
        description,
        interval: DateInterval { start, end },
    };
    vec![
        preset("strict", "strict nationwide lockdown", ymd(2020, 3, 25), ymd(2020, 4, 14)),
        preset("unlock7", "seventh unlock phase", ymd(2020, 12, 13), ymd(2020, 12, 19)),
        preset("none", "no lockdown, pre-pandemic mobility", ymd(2020, 2, 15), ymd(2020, 3, 3)),
        preset("current", "current conditions", ymd(2021, 8, 13), ymd(2021, 8, 19)),
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    builtin_presets().into_iter().find(|p| p.name == name)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongForecastPoint {
    pub date: NaiveDate,
    pub day: usize,
    pub lambda_tilde: f64,
    pub predicted: f64,
    /// Running total of predicted counts since the forecast start.
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongForecast {
    pub scenario: String,
    pub horizon: usize,
    pub mode: ForecastMode,
    pub seed: Option<u64>,
    pub points: Vec<LongForecastPoint>,
}

impl LongForecast {
    pub fn total(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.cumulative)
    }
}

/// Forecasts `horizon` days past the end of `record` with the fitted
/// network.
pub fn long_forecast(
    params: &HawkesParams,
    config: &ModelConfig,
    record: &RegionRecord,
    table: &ScenarioTable,
    horizon: usize,
    mode: ForecastMode,
    seed: u64,
) -> Result<LongForecast> {
    params.check_shapes(config)?;
    let need = 2 * config.lag + config.delta;
    if record.len() < need {
        return Err(Error::InsufficientHistory(format!(
            "{} observed days, a warm start needs {need}",
            record.len()
        )));
    }
    let repro = NetworkRepro { params, config };
    long_forecast_with(&Dynamics::from_params(params, &repro), record, table, horizon, mode, seed)
}

/// Scenario forecast for arbitrary dynamics (e.g. a fixed R sequence).
pub fn long_forecast_with(
    dynamics: &Dynamics<'_>,
    record: &RegionRecord,
    table: &ScenarioTable,
    horizon: usize,
    mode: ForecastMode,
    seed: u64,
) -> Result<LongForecast> {
    if horizon == 0 {
        return Err(Error::Argument("forecast horizon must be positive".into()));
    }
    if table.weekday_mobility[0].len() != record.mobility_dim() {
        return Err(Error::Shape {
            what: "scenario mobility dimension",
            expected: record.mobility_dim(),
            actual: table.weekday_mobility[0].len(),
        });
    }
    let observed = record.len();
    let mut series = record.to_series();
    let last_vaccinated = *series.vaccinated.last().expect("records are non-empty");
    for day in observed + 1..=observed + horizon {
        series.mobility.push(table.mobility_for(record.date_of(day)).to_vec());
        series.vaccinated.push(last_vaccinated);
    }
    let result = dynamics.forecast(&series, horizon, mode, seed)?;
    let mut cumulative = 0.0;
    let points = result
        .points
        .iter()
        .map(|p| {
            cumulative += p.predicted;
            LongForecastPoint {
                date: record.date_of(p.day),
                day: p.day,
                lambda_tilde: p.lambda_tilde,
                predicted: p.predicted,
                cumulative,
            }
        })
        .collect();
    Ok(LongForecast {
        scenario: table.name.clone(),
        horizon,
        mode,
        seed: (mode == ForecastMode::Sampled).then_some(seed),
        points,
    })
}

pub const FORECAST_HEADER: &str = "date,scenario,lambda_tilde,predicted_count,cumulative_predicted";
pub const PLOT_HEADER: &str = "date,value";

pub fn write_forecast_csv<W: Write>(mut out: W, forecast: &LongForecast) -> std::io::Result<()> {
    writeln!(out, "{FORECAST_HEADER}")?;
    for p in &forecast.points {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6}",
            p.date, forecast.scenario, p.lambda_tilde, p.predicted, p.cumulative
        )?;
    }
    Ok(())
}

/// `(date, predicted count)` pairs for external plotting.
pub fn write_plot_csv<W: Write>(mut out: W, forecast: &LongForecast) -> std::io::Result<()> {
    writeln!(out, "{PLOT_HEADER}")?;
    for p in &forecast.points {
        writeln!(out, "{},{:.6}", p.date, p.predicted)?;
    }
    Ok(())
}
