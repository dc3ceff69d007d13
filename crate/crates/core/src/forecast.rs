//! Multi-step forecasting that feeds predicted counts back as history.
//!
//! Shared by rolling validation (observed future mobility) and scenario
//! forecasts (weekday-averaged mobility).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ModelConfig, Series};
use crate::error::{Error, Result};
use crate::hawkes::susceptible_fraction;
use crate::model::HawkesParams;
use crate::sampling::poisson;

/// Source of R(day) given the (possibly bootstrapped) series.
pub trait ReproSource {
    fn reproduction(&self, series: &Series, day: usize) -> Result<f64>;
}

/// R from the fitted LSTM and head.
#[derive(Debug, Clone, Copy)]
pub struct NetworkRepro<'a> {
    pub params: &'a HawkesParams,
    pub config: &'a ModelConfig,
}

impl ReproSource for NetworkRepro<'_> {
    fn reproduction(&self, series: &Series, day: usize) -> Result<f64> {
        self.params.reproduction_on(series, day, self.config)
    }
}

/// Externally fixed R per day (`values[day - 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRepro(pub Vec<f64>);

impl ReproSource for FixedRepro {
    fn reproduction(&self, _series: &Series, day: usize) -> Result<f64> {
        self.0.get(day - 1).copied().ok_or(Error::DayOutOfRange {
            day,
            min: 1,
            max: self.0.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    /// Ĉ(t) = λ̃(t) every day.
    MeanPath,
    /// Ĉ(t) ~ Poisson(λ̃(t)).
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastPoint {
    pub day: usize,
    pub lambda_tilde: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub points: Vec<ForecastPoint>,
}

impl ForecastResult {
    pub fn predicted(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.predicted).collect()
    }

    pub fn total(&self) -> f64 {
        self.points.iter().map(|p| p.predicted).sum()
    }
}

/// Hawkes dynamics with a base rate, lag weights and an R source.
pub struct Dynamics<'a> {
    pub mu: f64,
    pub weights: Vec<f64>,
    pub repro: &'a dyn ReproSource,
}

impl<'a> Dynamics<'a> {
    pub fn from_params(params: &HawkesParams, repro: &'a dyn ReproSource) -> Self {
        Dynamics {
            mu: params.mu(),
            weights: params.weights(),
            repro,
        }
    }

    /// Forecasts `horizon` days past the observed counts in `history`.
    ///
    /// `history.mobility` and `history.vaccinated` must already cover the
    /// horizon. Predicted counts are capped so cumulative infections plus
    /// vaccinations never exceed the population.
    pub fn forecast(&self, history: &Series, horizon: usize, mode: ForecastMode, seed: u64) -> Result<ForecastResult> {
        if horizon == 0 {
            return Err(Error::Argument("forecast horizon must be positive".into()));
        }
        let lag = self.weights.len();
        let observed = history.counts.len();
        if observed < lag {
            return Err(Error::InsufficientHistory(format!(
                "{observed} observed days, need at least L={lag}"
            )));
        }
        let end = observed + horizon;
        for (what, len) in [
            ("mobility rows covering the horizon", history.mobility.len()),
            ("vaccination rows covering the horizon", history.vaccinated.len()),
        ] {
            if len < end {
                return Err(Error::Shape {
                    what,
                    expected: end,
                    actual: len,
                });
            }
        }

        let mut series = history.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cumulative: f64 = series.counts.iter().sum();
        // r[day] once computed; days before the first needed stay None
        let mut r: Vec<Option<f64>> = vec![None; end + 1];
        let mut points = Vec::with_capacity(horizon);
        for t in observed + 1..=end {
            let mut lambda = self.mu;
            for i in 1..=lag {
                let day = t - i;
                let r_day = match r[day] {
                    Some(v) => v,
                    None => {
                        let v = self.repro.reproduction(&series, day)?;
                        r[day] = Some(v);
                        v
                    }
                };
                lambda += self.weights[lag - i] * r_day * series.count(day);
            }
            let frac = susceptible_fraction(cumulative, series.vaccinated_on(t - 1), series.population)?;
            let lambda_tilde = frac * lambda;
            let remaining = (series.population - cumulative - series.vaccinated_on(t)).max(0.0);
            let predicted = match mode {
                ForecastMode::MeanPath => lambda_tilde.min(remaining),
                ForecastMode::Sampled => (poisson(lambda_tilde, &mut rng) as f64).min(remaining.floor()),
            };
            cumulative += predicted;
            series.counts.push(predicted);
            points.push(ForecastPoint {
                day: t,
                lambda_tilde,
                predicted,
            });
        }
        Ok(ForecastResult { points })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_history(counts: Vec<f64>, horizon: usize, population: f64) -> Series {
        let n = counts.len() + horizon;
        Series {
            counts,
            mobility: vec![vec![0.0]; n],
            vaccinated: vec![0.0; n],
            population,
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let repro = FixedRepro(vec![1.5; 50]);
        let dyn_ = Dynamics {
            mu: 0.0,
            weights: vec![0.5, 0.5],
            repro: &repro,
        };
        let out = dyn_
            .forecast(&flat_history(vec![0.0; 10], 30, 1e6), 30, ForecastMode::MeanPath, 0)
            .unwrap();
        assert!(out.points.iter().all(|p| p.predicted == 0.0));
    }

    #[test]
    fn mean_path_ignores_seed() {
        let repro = FixedRepro(vec![0.8; 60]);
        let dyn_ = Dynamics {
            mu: 2.0,
            weights: vec![0.3, 0.7],
            repro: &repro,
        };
        let h = flat_history(vec![5.0; 20], 30, 1e5);
        let a = dyn_.forecast(&h, 30, ForecastMode::MeanPath, 1).unwrap();
        let b = dyn_.forecast(&h, 30, ForecastMode::MeanPath, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_horizon_rejected() {
        let repro = FixedRepro(vec![1.0; 10]);
        let dyn_ = Dynamics {
            mu: 1.0,
            weights: vec![1.0],
            repro: &repro,
        };
        assert!(matches!(
            dyn_.forecast(&flat_history(vec![1.0; 5], 0, 10.0), 0, ForecastMode::MeanPath, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn saturating_population_caps_counts() {
        let repro = FixedRepro(vec![5.0; 100]);
        let dyn_ = Dynamics {
            mu: 10.0,
            weights: vec![1.0],
            repro: &repro,
        };
        let h = flat_history(vec![50.0; 3], 60, 1000.0);
        for mode in [ForecastMode::MeanPath, ForecastMode::Sampled] {
            let out = dyn_.forecast(&h, 60, mode, 3).unwrap();
            let total = 150.0 + out.total();
            assert!(total <= 1000.0 + 1e-9, "{mode:?}: {total}");
        }
    }
}
