//! Rolling-origin short-term validation.
//!
//! Interval `i` (1-based) of width `w` covers days
//! `t_s + 7(i−1) .. t_s + 7(i−1) + w − 1`; intervals are kept while they end
//! inside the validation span. Each interval is forecast by a model trained
//! only on days before it and scored by the absolute percentage error of the
//! interval totals.

use std::io::Write;

use rayon::prelude::*;

use crate::data::{ModelConfig, RegionRecord};
use crate::error::{Error, Result};
use crate::forecast::{Dynamics, ForecastMode, NetworkRepro};
use crate::trainer::fit;

pub const INTERVAL_STRIDE: usize = 7;

/// Days `start..=end` (1-based day ordinals).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn days(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationPlan {
    pub t_s: usize,
    pub span: usize,
    pub window: usize,
    pub intervals: Vec<Interval>,
}

impl ValidationPlan {
    pub fn new(t_s: usize, span: usize, window: usize) -> Result<Self> {
        Ok(ValidationPlan {
            t_s,
            span,
            window,
            intervals: make_intervals(t_s, span, window)?,
        })
    }
}

pub fn make_intervals(t_s: usize, span: usize, window: usize) -> Result<Vec<Interval>> {
    if t_s == 0 {
        return Err(Error::Argument("validation start is a 1-based day".into()));
    }
    if window == 0 || window > span {
        return Err(Error::Argument(format!(
            "window {window} must be between 1 and the validation span {span}"
        )));
    }
    let n = (span - window) / INTERVAL_STRIDE + 1;
    Ok((1..=n)
        .map(|i| {
            let start = t_s + INTERVAL_STRIDE * (i - 1);
            Interval {
                index: i,
                start,
                end: start + window - 1,
            }
        })
        .collect())
}

/// |Σ actual − Σ predicted| / Σ actual × 100.
pub fn mape(actual: &[u64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Shape {
            what: "predicted interval",
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    let truth: f64 = actual.iter().map(|&c| c as f64).sum();
    if truth == 0.0 {
        return Err(Error::UndefinedDenominator);
    }
    let guess: f64 = predicted.iter().sum();
    Ok((truth - guess).abs() / truth * 100.0)
}

/// Produces point forecasts for one validation interval. Implementations
/// must only use data from before `interval.start` apart from exogenous
/// inputs.
pub trait IntervalForecaster: Sync {
    fn forecast(&self, record: &RegionRecord, interval: &Interval) -> Result<Vec<f64>>;
}

/// Fits a fresh model on the days before the interval and forecasts it
/// with the mean path, using observed mobility and vaccination inside the
/// interval.
#[derive(Debug, Clone)]
pub struct RefitForecaster {
    pub config: ModelConfig,
}

impl IntervalForecaster for RefitForecaster {
    fn forecast(&self, record: &RegionRecord, interval: &Interval) -> Result<Vec<f64>> {
        let history = interval.start - 1;
        let need = self.config.first_scored_day();
        if history < need {
            return Err(Error::InsufficientHistory(format!(
                "interval {} starts on day {}, but training needs {need} prior days",
                interval.index, interval.start
            )));
        }
        let train = record.truncated(history)?;
        let report = fit(&train, &self.config)?;
        let full = record.truncated(interval.end)?.to_series();
        let mut series = full.clone();
        series.counts.truncate(history);
        let repro = NetworkRepro {
            params: &report.final_params,
            config: &self.config,
        };
        let dynamics = Dynamics::from_params(&report.final_params, &repro);
        Ok(dynamics
            .forecast(&series, interval.len(), ForecastMode::MeanPath, 0)?
            .predicted())
    }
}

/// Replays the observed counts: a perfect forecaster.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReplayForecaster;

impl IntervalForecaster for ReplayForecaster {
    fn forecast(&self, record: &RegionRecord, interval: &Interval) -> Result<Vec<f64>> {
        Ok(record.cases()[interval.start - 1..interval.end]
            .iter()
            .map(|&c| c as f64)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalScore {
    pub interval: Interval,
    pub actual_sum: u64,
    pub predicted_sum: f64,
    /// `None` when the interval's actual total is zero.
    pub mape: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub window: usize,
    pub t_s: usize,
    pub span: usize,
    pub per_interval: Vec<IntervalScore>,
    /// Mean MAPE over scored intervals; `None` if every interval was skipped.
    pub aggregate: Option<f64>,
}

impl ValidationReport {
    pub fn skipped(&self) -> impl Iterator<Item = &IntervalScore> {
        self.per_interval.iter().filter(|s| s.mape.is_none())
    }
}

/// Scores each interval of `plan` (in parallel) and averages the MAPEs.
pub fn rolling_validate<F: IntervalForecaster>(record: &RegionRecord, plan: &ValidationPlan, forecaster: &F) -> Result<ValidationReport> {
    let last = plan.t_s + plan.span - 1;
    if last > record.len() {
        return Err(Error::DayOutOfRange {
            day: last,
            min: 1,
            max: record.len(),
        });
    }
    let scores: Vec<Result<IntervalScore>> = plan
        .intervals
        .par_iter()
        .map(|interval| {
            let predicted = forecaster.forecast(record, interval)?;
            let actual = &record.cases()[interval.start - 1..interval.end];
            let mape = match mape(actual, &predicted) {
                Ok(v) => Some(v),
                Err(Error::UndefinedDenominator) => None,
                Err(e) => return Err(e),
            };
            Ok(IntervalScore {
                interval: *interval,
                actual_sum: actual.iter().sum(),
                predicted_sum: predicted.iter().sum(),
                mape,
            })
        })
        .collect();
    let per_interval = scores.into_iter().collect::<Result<Vec<_>>>()?;
    for s in per_interval.iter().filter(|s| s.mape.is_none()) {
        log::warn!(
            "window {}: interval {} (days {}..={}) has no observed cases and is excluded",
            plan.window,
            s.interval.index,
            s.interval.start,
            s.interval.end
        );
    }
    let scored: Vec<f64> = per_interval.iter().filter_map(|s| s.mape).collect();
    let aggregate = (!scored.is_empty()).then(|| scored.iter().sum::<f64>() / scored.len() as f64);
    Ok(ValidationReport {
        window: plan.window,
        t_s: plan.t_s,
        span: plan.span,
        per_interval,
        aggregate,
    })
}

pub const REPORT_HEADER: &str = "window,interval_index,start_day,end_day,actual_sum,predicted_sum,mape";

/// Writes per-interval rows followed by one `summary` row per window.
/// Skipped intervals carry `skipped` in the MAPE column.
pub fn write_report_csv<W: Write>(mut out: W, reports: &[ValidationReport]) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for report in reports {
        for s in &report.per_interval {
            let mape = s.mape.map_or_else(|| "skipped".to_string(), |v| format!("{v:.6}"));
            writeln!(
                out,
                "{},{},{},{},{},{:.6},{}",
                report.window, s.interval.index, s.interval.start, s.interval.end, s.actual_sum, s.predicted_sum, mape
            )?;
        }
        let actual: u64 = report.per_interval.iter().map(|s| s.actual_sum).sum();
        let predicted: f64 = report.per_interval.iter().map(|s| s.predicted_sum).sum();
        let aggregate = report.aggregate.map_or_else(|| "skipped".to_string(), |v| format!("{v:.6}"));
        writeln!(
            out,
            "{},summary,{},{},{},{:.6},{}",
            report.window,
            report.t_s,
            report.t_s + report.span - 1,
            actual,
            predicted,
            aggregate
        )?;
    }
    Ok(())
}
