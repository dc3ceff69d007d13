//! Maximum-likelihood fitting with Adam on the unconstrained coordinates.

use crate::data::{ModelConfig, RegionRecord};
use crate::error::{Error, Result};
use crate::model::{HawkesParams, ParamGroup};
use crate::objective::nll_and_gradient;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// NLL of the parameters at the start of each iteration.
    pub nll_trace: Vec<f64>,
    /// Number of optimizer updates applied.
    pub iterations_run: usize,
    pub converged: bool,
    /// Lowest-NLL parameters seen.
    pub final_params: HawkesParams,
    pub final_nll: f64,
}

/// Adam moments over a flat parameter vector. Frozen coordinates are never
/// moved.
#[derive(Debug, Clone)]
struct Adam {
    step_size: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    mask: Vec<bool>,
    t: i32,
}

impl Adam {
    fn new(step_size: f64, mask: Vec<bool>) -> Self {
        let n = mask.len();
        Adam {
            step_size,
            first: vec![0.0; n],
            second: vec![0.0; n],
            mask,
            t: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bias1 = 1.0 - BETA1.powi(self.t);
        let bias2 = 1.0 - BETA2.powi(self.t);
        for (k, (p, &g)) in params.iter_mut().zip(grad).enumerate() {
            if !self.mask[k] {
                continue;
            }
            self.first[k] = BETA1 * self.first[k] + (1.0 - BETA1) * g;
            self.second[k] = BETA2 * self.second[k] + (1.0 - BETA2) * g * g;
            let m_hat = self.first[k] / bias1;
            let v_hat = self.second[k] / bias2;
            *p -= self.step_size * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

pub fn fit(record: &RegionRecord, config: &ModelConfig) -> Result<TrainReport> {
    fit_observed(record, config, HawkesParams::init(config, config.optimizer.seed), |_, _| {})
}

/// Fits starting from `initial`, calling `observer(step, params)` after
/// every optimizer update.
pub fn fit_observed<F>(record: &RegionRecord, config: &ModelConfig, initial: HawkesParams, mut observer: F) -> Result<TrainReport>
where
    F: FnMut(usize, &HawkesParams),
{
    config.validate()?;
    initial.check_shapes(config)?;
    if record.mobility_dim() != config.mobility_dim {
        return Err(Error::Shape {
            what: "mobility dimension",
            expected: config.mobility_dim,
            actual: record.mobility_dim(),
        });
    }
    let series = record.to_series();
    let opt = &config.optimizer;
    let mask: Vec<bool> = initial
        .flatten_tagged()
        .iter()
        .map(|(g, _)| g.is_trainable(&config.trainable))
        .collect();
    let network_grad = ParamGroup::Lstm.is_trainable(&config.trainable) || ParamGroup::Head.is_trainable(&config.trainable);
    let mut adam = Adam::new(opt.step_size, mask);

    let mut params = initial;
    let mut flat = params.flatten();
    let mut best = (f64::INFINITY, params.clone());
    let mut trace = Vec::new();
    let mut stalled = 0usize;
    let mut converged = false;
    let mut updates = 0usize;

    for iteration in 0..=opt.max_iters {
        let (nll, grad) = nll_and_gradient(&params, &series, config, network_grad)?;
        if !nll.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            let change = (nll - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if change < opt.tolerance {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }
        trace.push(nll);
        if nll < best.0 {
            best = (nll, params.clone());
        }
        if stalled >= opt.patience.max(1) {
            converged = true;
            break;
        }
        if iteration == opt.max_iters {
            break;
        }
        let grad = grad.flatten();
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { iteration });
        }
        adam.update(&mut flat, &grad);
        params.assign_flat(&flat)?;
        updates += 1;
        observer(updates, &params);
    }

    Ok(TrainReport {
        nll_trace: trace,
        iterations_run: updates,
        converged,
        final_nll: best.0,
        final_params: best.1,
    })
}
