//! Core domain types: region hierarchy, aligned daily series and model
//! configuration.
//!
//! Days are 1-based ordinals ([`DayIndex`]) counted from a record's start
//! date. Calendar logic lives in ingestion and scenario construction only.

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based day ordinal counted from a record's first observed date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayIndex(usize);

impl DayIndex {
    pub fn new(value: usize) -> Result<Self> {
        if value == 0 {
            return Err(Error::Argument("day index is 1-based".into()));
        }
        Ok(DayIndex(value))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn next(self) -> Self {
        DayIndex(self.0 + 1)
    }
}

impl fmt::Display for DayIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLevel {
    Nation,
    State,
    District,
}

impl RegionLevel {
    /// The level directly above this one, if any.
    pub fn parent_level(self) -> Option<RegionLevel> {
        match self {
            RegionLevel::Nation => None,
            RegionLevel::State => Some(RegionLevel::Nation),
            RegionLevel::District => Some(RegionLevel::State),
        }
    }

    pub fn child_level(self) -> Option<RegionLevel> {
        match self {
            RegionLevel::Nation => Some(RegionLevel::State),
            RegionLevel::State => Some(RegionLevel::District),
            RegionLevel::District => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegionLevel::Nation => "nation",
            RegionLevel::State => "state",
            RegionLevel::District => "district",
        }
    }
}

impl fmt::Display for RegionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nation" => Ok(RegionLevel::Nation),
            "state" => Ok(RegionLevel::State),
            "district" => Ok(RegionLevel::District),
            other => Err(Error::Argument(format!("unknown region level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionId {
    pub id: String,
    pub level: RegionLevel,
    pub parent: Option<String>,
}

impl RegionId {
    pub fn nation(id: impl Into<String>) -> Self {
        RegionId {
            id: id.into(),
            level: RegionLevel::Nation,
            parent: None,
        }
    }

    pub fn child(id: impl Into<String>, level: RegionLevel, parent: impl Into<String>) -> Self {
        RegionId {
            id: id.into(),
            level,
            parent: Some(parent.into()),
        }
    }
}

/// One region's aligned daily series.
///
/// All series cover the same contiguous day range starting at
/// `start_date`. Construction validates that vaccinations are cumulative
/// (non-decreasing) and that cumulative cases plus vaccinations never
/// exceed the population.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRecord {
    region: RegionId,
    cases: Vec<u64>,
    mobility: Vec<Vec<f64>>,
    vaccinated: Vec<u64>,
    population: u64,
    start_date: NaiveDate,
}

impl RegionRecord {
    pub fn new(
        region: RegionId,
        cases: Vec<u64>,
        mobility: Vec<Vec<f64>>,
        vaccinated: Vec<u64>,
        population: u64,
        start_date: NaiveDate,
    ) -> Result<Self> {
        if population == 0 {
            return Err(Error::Argument(format!(
                "region `{}` has zero population",
                region.id
            )));
        }
        if cases.is_empty() {
            return Err(Error::Argument(format!("region `{}` has no days", region.id)));
        }
        if mobility.len() != cases.len() {
            return Err(Error::Shape {
                what: "mobility series length",
                expected: cases.len(),
                actual: mobility.len(),
            });
        }
        if vaccinated.len() != cases.len() {
            return Err(Error::Shape {
                what: "vaccination series length",
                expected: cases.len(),
                actual: vaccinated.len(),
            });
        }
        let dim = mobility[0].len();
        if let Some(bad) = mobility.iter().find(|m| m.len() != dim) {
            return Err(Error::Shape {
                what: "mobility vector dimension",
                expected: dim,
                actual: bad.len(),
            });
        }
        let record = RegionRecord {
            region,
            cases,
            mobility,
            vaccinated,
            population,
            start_date,
        };
        record.check_consistency()?;
        Ok(record)
    }

    fn check_consistency(&self) -> Result<()> {
        let mut cumulative = 0u64;
        for (idx, (&c, &v)) in self.cases.iter().zip(&self.vaccinated).enumerate() {
            let day = idx + 1;
            if idx > 0 && v < self.vaccinated[idx - 1] {
                return Err(self.consistency_error(
                    day,
                    format!(
                        "cumulative vaccinations decrease from {} to {v}",
                        self.vaccinated[idx - 1]
                    ),
                ));
            }
            cumulative += c;
            if cumulative.saturating_add(v) > self.population {
                return Err(self.consistency_error(
                    day,
                    format!(
                        "cumulative cases {cumulative} plus vaccinated {v} exceed population {}",
                        self.population
                    ),
                ));
            }
        }
        Ok(())
    }

    fn consistency_error(&self, day: usize, message: String) -> Error {
        Error::DataConsistency {
            region: self.region.id.clone(),
            date: self.date_of(day),
            day,
            message,
        }
    }

    pub fn region(&self) -> &RegionId {
        &self.region
    }

    pub fn cases(&self) -> &[u64] {
        &self.cases
    }

    pub fn mobility(&self) -> &[Vec<f64>] {
        &self.mobility
    }

    pub fn vaccinated(&self) -> &[u64] {
        &self.vaccinated
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn mobility_dim(&self) -> usize {
        self.mobility.first().map_or(0, Vec::len)
    }

    pub fn last_date(&self) -> NaiveDate {
        self.date_of(self.len())
    }

    /// Calendar date of a 1-based day ordinal (may lie past the record end).
    pub fn date_of(&self, day: usize) -> NaiveDate {
        self.start_date + Days::new(day as u64 - 1)
    }

    /// Day ordinal of a calendar date, if it falls on or after the start.
    pub fn day_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        (offset >= 0).then(|| offset as usize + 1)
    }

    /// The first `days` days of this record.
    pub fn truncated(&self, days: usize) -> Result<Self> {
        if days == 0 || days > self.len() {
            return Err(Error::DayOutOfRange {
                day: days,
                min: 1,
                max: self.len(),
            });
        }
        Ok(RegionRecord {
            region: self.region.clone(),
            cases: self.cases[..days].to_vec(),
            mobility: self.mobility[..days].to_vec(),
            vaccinated: self.vaccinated[..days].to_vec(),
            population: self.population,
            start_date: self.start_date,
        })
    }

    pub fn with_region(mut self, region: RegionId) -> Self {
        self.region = region;
        self
    }

    /// Real-valued view of the record, the form consumed by the model.
    pub fn to_series(&self) -> Series {
        Series {
            counts: self.cases.iter().map(|&c| c as f64).collect(),
            mobility: self.mobility.clone(),
            vaccinated: self.vaccinated.iter().map(|&v| v as f64).collect(),
            population: self.population as f64,
        }
    }
}

/// N(t−1): total cases strictly before day `t`.
///
/// Valid for `t` in `1..=len+1`.
pub fn cumulative_infected(record: &RegionRecord, t: DayIndex) -> Result<u64> {
    let t = t.get();
    if t > record.len() + 1 {
        return Err(Error::DayOutOfRange {
            day: t,
            min: 1,
            max: record.len() + 1,
        });
    }
    Ok(record.cases[..t - 1].iter().sum())
}

/// Real-valued daily series used by the model.
///
/// Counts are real so that bootstrapped forecasts (expected values) can be
/// fed back as history. `mobility` and `vaccinated` may extend past
/// `counts` when forecasting. Index 0 is day 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub counts: Vec<f64>,
    pub mobility: Vec<Vec<f64>>,
    pub vaccinated: Vec<f64>,
    pub population: f64,
}

impl Series {
    pub fn count(&self, day: usize) -> f64 {
        self.counts[day - 1]
    }

    pub fn mobility_on(&self, day: usize) -> &[f64] {
        &self.mobility[day - 1]
    }

    /// V(t); 0 before day 1.
    pub fn vaccinated_on(&self, day: usize) -> f64 {
        if day == 0 {
            0.0
        } else {
            self.vaccinated[day - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub step_size: f64,
    pub max_iters: usize,
    /// Relative NLL change below which an iteration counts as stalled.
    pub tolerance: f64,
    /// Consecutive stalled iterations required to declare convergence.
    pub patience: usize,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            step_size: 1e-2,
            max_iters: 2000,
            tolerance: 1e-6,
            patience: 50,
            seed: 0,
        }
    }
}

/// Parameter groups updated during training. Frozen groups keep their
/// initial values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainableGroups {
    pub base: bool,
    pub lags: bool,
    pub lstm: bool,
    pub head: bool,
}

impl Default for TrainableGroups {
    fn default() -> Self {
        TrainableGroups {
            base: true,
            lags: true,
            lstm: true,
            head: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// L: days of past counts exciting the present.
    pub lag: usize,
    /// Δ: extra delay applied to mobility features.
    pub delta: usize,
    /// d_m: mobility vector dimension.
    pub mobility_dim: usize,
    /// d: LSTM hidden size.
    pub hidden: usize,
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub trainable: TrainableGroups,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lag: 28,
            delta: 14,
            mobility_dim: 6,
            hidden: 32,
            optimizer: OptimizerSettings::default(),
            trainable: TrainableGroups::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lag == 0 {
            return Err(Error::Argument("lag window L must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Argument("hidden size must be at least 1".into()));
        }
        if self.mobility_dim == 0 {
            return Err(Error::Argument("mobility dimension must be at least 1".into()));
        }
        let opt = &self.optimizer;
        if !(opt.step_size.is_finite() && opt.step_size > 0.0) {
            return Err(Error::Argument("step size must be positive".into()));
        }
        if !(opt.tolerance.is_finite() && opt.tolerance >= 0.0) {
            return Err(Error::Argument("tolerance must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-step LSTM input width: mobility plus one count feature.
    pub fn input_dim(&self) -> usize {
        self.mobility_dim + 1
    }

    /// First day whose reproduction-number feature window is fully observed.
    pub fn first_repro_day(&self) -> usize {
        self.lag + self.delta + 1
    }

    /// First day entering the likelihood: every R(t−i), i = 1..L, must be
    /// computable, so t − L ≥ L + Δ + 1.
    pub fn first_scored_day(&self) -> usize {
        2 * self.lag + self.delta + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(cases: Vec<u64>) -> RegionRecord {
        let n = cases.len();
        RegionRecord::new(
            RegionId::nation("X"),
            cases,
            vec![vec![0.0; 6]; n],
            vec![0; n],
            1000,
            NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn cumulative_infected_examples() {
        let r = record(vec![5, 3, 2]);
        let at = |t| cumulative_infected(&r, DayIndex::new(t).unwrap()).unwrap();
        assert_eq!(at(1), 0);
        assert_eq!(at(3), 8);
        assert_eq!(at(4), 10);
        assert!(matches!(
            cumulative_infected(&r, DayIndex::new(5).unwrap()),
            Err(Error::DayOutOfRange { day: 5, .. })
        ));
    }

    #[test]
    fn cumulative_increments_are_daily_counts() {
        let r = record(vec![4, 0, 7, 1, 9]);
        for t in 1..=5 {
            let a = cumulative_infected(&r, DayIndex::new(t).unwrap()).unwrap();
            let b = cumulative_infected(&r, DayIndex::new(t + 1).unwrap()).unwrap();
            assert_eq!(b - a, r.cases()[t - 1]);
        }
    }

    #[test]
    fn day_index_is_one_based() {
        assert!(DayIndex::new(0).is_err());
        assert_eq!(DayIndex::new(3).unwrap().next().get(), 4);
    }

    #[test]
    fn record_rejects_decreasing_vaccination() {
        let err = RegionRecord::new(
            RegionId::nation("X"),
            vec![0; 4],
            vec![vec![0.0]; 4],
            vec![1, 2, 1, 3],
            100,
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
        )
        .unwrap_err();
        match err {
            Error::DataConsistency { day, date, .. } => {
                assert_eq!(day, 3);
                assert_eq!(date, NaiveDate::from_ymd_opt(2021, 1, 3).unwrap());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn record_rejects_over_population() {
        let err = RegionRecord::new(
            RegionId::nation("X"),
            vec![40, 40, 40],
            vec![vec![0.0]; 3],
            vec![0, 10, 30],
            100,
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DataConsistency { day: 3, .. }));
    }

    #[test]
    fn config_defaults() {
        let c = ModelConfig::default();
        assert_eq!((c.lag, c.delta, c.mobility_dim, c.hidden), (28, 14, 6, 32));
        assert_eq!(c.first_scored_day(), 71);
        assert_eq!(c.input_dim(), 7);
    }
}
