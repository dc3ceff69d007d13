//! Poisson negative log-likelihood of a region's series and its exact
//! gradient via backpropagation through time.
//!
//! Scored days run from `2L + Δ + 1` to the last observed day: each scored
//! day needs R on its previous L days, and each of those needs a full
//! feature window.

use crate::data::{ModelConfig, RegionRecord, Series};
use crate::error::{Error, Result};
use crate::hawkes::{poisson_nll, poisson_nll_grad, sigmoid, susceptible_fraction};
use crate::model::{HawkesParams, ParamGradient};
use crate::repro::{features_from_series, lstm_backward, lstm_forward_trace};

/// Per-day decomposition of the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayTerm {
    pub day: usize,
    pub lambda: f64,
    pub lambda_tilde: f64,
    pub count: f64,
    pub nll: f64,
}

fn check_length(series_len: usize, config: &ModelConfig) -> Result<()> {
    let need = config.first_scored_day();
    if series_len < need {
        return Err(Error::InsufficientHistory(format!(
            "{series_len} days observed, at least {need} needed for one scored day (L={}, Δ={})",
            config.lag, config.delta
        )));
    }
    Ok(())
}

/// R(s) for every day the likelihood touches, indexed by day (entries
/// below `first_repro_day` are unused and left at zero).
fn reproduction_series(params: &HawkesParams, series: &Series, config: &ModelConfig) -> Result<Vec<f64>> {
    let last = series.counts.len();
    let mut r = vec![0.0; last + 1];
    for (s, slot) in r.iter_mut().enumerate().take(last).skip(config.first_repro_day()) {
        *slot = params.reproduction_on(series, s, config)?;
    }
    Ok(r)
}

fn prefix_sums(counts: &[f64]) -> Vec<f64> {
    // prefix[t] = N(t) = Σ_{s ≤ t} C(s)
    let mut out = Vec::with_capacity(counts.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for &c in counts {
        acc += c;
        out.push(acc);
    }
    out
}

fn day_terms_with(params: &HawkesParams, series: &Series, config: &ModelConfig, r: &[f64]) -> Result<Vec<DayTerm>> {
    let mu = params.mu();
    let w = params.weights();
    let lag = config.lag;
    let cumulative = prefix_sums(&series.counts);
    (config.first_scored_day()..=series.counts.len())
        .map(|t| {
            let lambda = mu + (1..=lag).map(|i| w[lag - i] * r[t - i] * series.count(t - i)).sum::<f64>();
            let frac = susceptible_fraction(cumulative[t - 1], series.vaccinated_on(t - 1), series.population)?;
            let lambda_tilde = frac * lambda;
            let count = series.count(t);
            Ok(DayTerm {
                day: t,
                lambda,
                lambda_tilde,
                count,
                nll: poisson_nll(lambda_tilde, count),
            })
        })
        .collect()
}

pub fn series_day_terms(params: &HawkesParams, series: &Series, config: &ModelConfig) -> Result<Vec<DayTerm>> {
    params.check_shapes(config)?;
    check_length(series.counts.len(), config)?;
    let r = reproduction_series(params, series, config)?;
    day_terms_with(params, series, config, &r)
}

/// Per-day likelihood terms for every scored day.
pub fn day_terms(params: &HawkesParams, record: &RegionRecord, config: &ModelConfig) -> Result<Vec<DayTerm>> {
    series_day_terms(params, &record.to_series(), config)
}

/// Σ over scored days of λ̃(t) − C(t)·ln λ̃(t) (the ln C(t)! constant is
/// omitted).
pub fn total_nll(params: &HawkesParams, record: &RegionRecord, config: &ModelConfig) -> Result<f64> {
    Ok(day_terms(params, record, config)?.iter().map(|d| d.nll).sum())
}

pub fn gradient(params: &HawkesParams, record: &RegionRecord, config: &ModelConfig) -> Result<ParamGradient> {
    Ok(nll_and_gradient(params, &record.to_series(), config, true)?.1)
}

/// Total NLL and its gradient with respect to every unconstrained
/// coordinate. With `network_grad = false` the LSTM and head entries of the
/// gradient are left at zero and the backward pass through the network is
/// skipped.
pub fn nll_and_gradient(
    params: &HawkesParams,
    series: &Series,
    config: &ModelConfig,
    network_grad: bool,
) -> Result<(f64, ParamGradient)> {
    params.check_shapes(config)?;
    check_length(series.counts.len(), config)?;
    let r = reproduction_series(params, series, config)?;
    let terms = day_terms_with(params, series, config, &r)?;
    let lag = config.lag;
    let w = params.weights();
    let cumulative = prefix_sums(&series.counts);

    let mut grad = HawkesParams::zeros(config);
    let mut d_mu = 0.0;
    let mut d_w = vec![0.0; lag];
    let mut d_r = vec![0.0; r.len()];
    let mut total = 0.0;
    for term in &terms {
        let t = term.day;
        total += term.nll;
        let frac = susceptible_fraction(cumulative[t - 1], series.vaccinated_on(t - 1), series.population)?;
        let g = frac * poisson_nll_grad(term.lambda_tilde, term.count);
        if g == 0.0 {
            continue;
        }
        d_mu += g;
        for i in 1..=lag {
            let c = series.count(t - i);
            d_w[lag - i] += g * r[t - i] * c;
            d_r[t - i] += g * w[lag - i] * c;
        }
    }

    grad.base.raw = d_mu * sigmoid(params.base.raw);
    let mean: f64 = w.iter().zip(&d_w).map(|(a, b)| a * b).sum();
    for (j, z) in grad.lags.logits.iter_mut().enumerate() {
        *z = w[j] * (d_w[j] - mean);
    }

    if network_grad {
        for (s, &dr) in d_r.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            let window = features_from_series(series, s, lag, config.delta)?;
            let trace = lstm_forward_trace(&window, &params.lstm)?;
            let h = &trace.final_state.h;
            let da = dr * sigmoid(params.head.activation(h));
            for (gw, hj) in grad.head.w.iter_mut().zip(h) {
                *gw += da * hj;
            }
            grad.head.b += da;
            let dh: Vec<f64> = params.head.w.iter().map(|v| da * v).collect();
            lstm_backward(&trace, &params.lstm, &dh, &mut grad.lstm);
        }
    }
    Ok((total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RegionId;
    use crate::hawkes::BaseRate;
    use crate::repro::ReproHead;
    use chrono::NaiveDate;

    fn cfg(lag: usize, delta: usize) -> ModelConfig {
        ModelConfig {
            lag,
            delta,
            mobility_dim: 2,
            hidden: 3,
            ..ModelConfig::default()
        }
    }

    fn record(cases: Vec<u64>, population: u64) -> RegionRecord {
        let n = cases.len();
        RegionRecord::new(
            RegionId::nation("X"),
            cases,
            (0..n).map(|t| vec![(t as f64).sin() * 20.0, -5.0]).collect(),
            vec![0; n],
            population,
            NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn too_short_record() {
        let c = cfg(2, 1);
        let p = HawkesParams::init(&c, 0);
        let r = record(vec![1; 5], 1000);
        assert!(matches!(total_nll(&p, &r, &c), Err(Error::InsufficientHistory(_))));
    }

    #[test]
    fn single_scored_day_composes_hawkes_terms() {
        // L=1, Δ=0: the only scored day is t=3 and λ = μ + R(2)·C(2).
        let c = cfg(1, 0);
        let mut p = HawkesParams::zeros(&c);
        p.head = ReproHead::constant(3, 0.5);
        p.base = BaseRate::from_mu(1.0);
        // λ = 1 + 0.5·2 = 2, no discount to speak of, C(3) = 3
        let r = record(vec![7, 2, 3], 1_000_000_000_000);
        let nll = total_nll(&p, &r, &c).unwrap();
        let expected = 2.0 - 3.0 * 2f64.ln();
        assert!((nll - expected).abs() < 1e-6, "{nll} vs {expected}");
    }

    #[test]
    fn zero_counts_with_vanishing_mu() {
        let c = cfg(2, 1);
        let mut p = HawkesParams::init(&c, 1);
        p.base.raw = -40.0;
        let r = record(vec![0; 12], 1000);
        let terms = day_terms(&p, &r, &c).unwrap();
        assert_eq!(terms.len(), 12 - 6 + 1);
        for t in &terms {
            assert!(t.nll < 1e-7);
        }
    }

    #[test]
    fn total_is_sum_of_day_terms() {
        let c = cfg(3, 2);
        let p = HawkesParams::init(&c, 2);
        let r = record((0..25).map(|t| (t * 7 % 13) as u64).collect(), 5000);
        let terms = day_terms(&p, &r, &c).unwrap();
        let by_hand: f64 = terms.iter().map(|d| poisson_nll(d.lambda_tilde, d.count)).sum();
        assert_eq!(total_nll(&p, &r, &c).unwrap(), by_hand);
        assert_eq!(terms.first().unwrap().day, 9);
    }

    #[test]
    fn lag_gradient_vanishes_without_counts() {
        let c = cfg(3, 1);
        let p = HawkesParams::init(&c, 4);
        let r = record(vec![0; 20], 5000);
        let g = gradient(&p, &r, &c).unwrap();
        assert!(g.lags.logits.iter().all(|&v| v == 0.0));
        assert!(g.base.raw != 0.0);
    }
}
