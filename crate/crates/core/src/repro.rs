//! Reproduction-number network: lagged feature windows, a single LSTM layer
//! and a softplus head.
//!
//! Each lag contributes one LSTM step, oldest first. Step inputs are the
//! mobility vector `m(t−i−Δ)` scaled by 1/100 followed by the count feature
//! `ln(1 + C(t−i)) / ln(1 + N)`. The recurrent state starts from zeros for
//! every window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DayIndex, ModelConfig, RegionRecord, Series};
use crate::error::{Error, Result};
use crate::hawkes::{sigmoid, softplus};

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CELL: usize = 2;
pub const GATE_OUTPUT: usize = 3;

/// L input steps of width d_m + 1, oldest lag first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub steps: Vec<Vec<f64>>,
}

pub fn build_features(record: &RegionRecord, t: DayIndex, config: &ModelConfig) -> Result<FeatureWindow> {
    if record.mobility_dim() != config.mobility_dim {
        return Err(Error::Shape {
            what: "mobility dimension",
            expected: config.mobility_dim,
            actual: record.mobility_dim(),
        });
    }
    let t = t.get();
    if t > record.len() + 1 {
        return Err(Error::DayOutOfRange {
            day: t,
            min: config.first_repro_day(),
            max: record.len() + 1,
        });
    }
    features_from_series(&record.to_series(), t, config.lag, config.delta)
}

/// Feature window for day `t` from a real-valued series. Needs counts up to
/// day t−1 and mobility up to day t−1−Δ.
pub fn features_from_series(series: &Series, t: usize, lag: usize, delta: usize) -> Result<FeatureWindow> {
    if t < lag + delta + 1 {
        return Err(Error::InsufficientHistory(format!(
            "day {t} needs {lag} lags plus a {delta}-day mobility gap before it"
        )));
    }
    if t - 1 > series.counts.len() || t - 1 - delta > series.mobility.len() {
        return Err(Error::DayOutOfRange {
            day: t,
            min: lag + delta + 1,
            max: series.counts.len() + 1,
        });
    }
    let norm = (1.0 + series.population).ln();
    let steps = (1..=lag)
        .rev()
        .map(|i| {
            let mut step: Vec<f64> = series
                .mobility_on(t - i - delta)
                .iter()
                .map(|m| m / 100.0)
                .collect();
            step.push(series.count(t - i).ln_1p() / norm);
            step
        })
        .collect();
    Ok(FeatureWindow { steps })
}

/// Weights of one gate: input matrix (d × n_in), recurrent matrix (d × d)
/// and bias (d), all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    pub input: Vec<f64>,
    pub recurrent: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GateWeights {
    fn zeros(hidden: usize, input_dim: usize) -> Self {
        GateWeights {
            input: vec![0.0; hidden * input_dim],
            recurrent: vec![0.0; hidden * hidden],
            bias: vec![0.0; hidden],
        }
    }
}

/// Gates in the order input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub hidden: usize,
    pub input_dim: usize,
    pub gates: [GateWeights; 4],
}

impl LstmWeights {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        LstmWeights {
            hidden,
            input_dim,
            gates: std::array::from_fn(|_| GateWeights::zeros(hidden, input_dim)),
        }
    }

    /// Uniform(−1/√d, 1/√d) weights, forget-gate bias 1.
    pub fn init<R: Rng>(hidden: usize, input_dim: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut w = Self::zeros(hidden, input_dim);
        for gate in &mut w.gates {
            for v in gate
                .input
                .iter_mut()
                .chain(gate.recurrent.iter_mut())
                .chain(gate.bias.iter_mut())
            {
                *v = rng.random_range(-k..=k);
            }
        }
        w.gates[GATE_FORGET].bias.iter_mut().for_each(|b| *b = 1.0);
        w
    }

    fn check_shapes(&self) -> Result<()> {
        let (d, n) = (self.hidden, self.input_dim);
        for gate in &self.gates {
            for (what, expected, actual) in [
                ("LSTM input matrix", d * n, gate.input.len()),
                ("LSTM recurrent matrix", d * d, gate.recurrent.len()),
                ("LSTM bias", d, gate.bias.len()),
            ] {
                if expected != actual {
                    return Err(Error::Shape {
                        what,
                        expected,
                        actual,
                    });
                }
            }
        }
        Ok(())
    }

    /// Pre-activation of `gate` for input `x` and previous hidden `h`.
    fn preactivation(&self, gate: usize, x: &[f64], h: &[f64]) -> Vec<f64> {
        let g = &self.gates[gate];
        let (d, n) = (self.hidden, self.input_dim);
        (0..d)
            .map(|r| {
                let wx: f64 = g.input[r * n..(r + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
                let uh: f64 = g.recurrent[r * d..(r + 1) * d].iter().zip(h).map(|(a, b)| a * b).sum();
                g.bias[r] + wx + uh
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations recorded at one step for backpropagation.
#[derive(Debug, Clone)]
struct StepTrace {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-nonlinearity gate values, indexed by the GATE_* constants.
    gates: [Vec<f64>; 4],
    c: Vec<f64>,
}

/// Forward pass over a window with every intermediate retained.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    steps: Vec<StepTrace>,
    pub final_state: LstmState,
}

fn step(weights: &LstmWeights, x: &[f64], state: &LstmState) -> StepTrace {
    let mut gates: [Vec<f64>; 4] = std::array::from_fn(|g| weights.preactivation(g, x, &state.h));
    for (g, values) in gates.iter_mut().enumerate() {
        let f: fn(f64) -> f64 = if g == GATE_CELL { f64::tanh } else { sigmoid };
        values.iter_mut().for_each(|v| *v = f(*v));
    }
    let c = (0..weights.hidden)
        .map(|j| gates[GATE_FORGET][j] * state.c[j] + gates[GATE_INPUT][j] * gates[GATE_CELL][j])
        .collect();
    StepTrace {
        x: x.to_vec(),
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gates,
        c,
    }
}

fn check_window(window: &FeatureWindow, weights: &LstmWeights, init: &LstmState) -> Result<()> {
    weights.check_shapes()?;
    if let Some(bad) = window.steps.iter().find(|s| s.len() != weights.input_dim) {
        return Err(Error::Shape {
            what: "feature step width",
            expected: weights.input_dim,
            actual: bad.len(),
        });
    }
    if init.h.len() != weights.hidden || init.c.len() != weights.hidden {
        return Err(Error::Shape {
            what: "LSTM initial state",
            expected: weights.hidden,
            actual: init.h.len().min(init.c.len()),
        });
    }
    Ok(())
}

pub fn lstm_forward(window: &FeatureWindow, weights: &LstmWeights, init: &LstmState) -> Result<LstmState> {
    check_window(window, weights, init)?;
    let mut state = init.clone();
    for x in &window.steps {
        let s = step(weights, x, &state);
        let h = (0..weights.hidden)
            .map(|j| s.gates[GATE_OUTPUT][j] * s.c[j].tanh())
            .collect();
        state = LstmState { h, c: s.c };
    }
    Ok(state)
}

pub fn lstm_forward_trace(window: &FeatureWindow, weights: &LstmWeights) -> Result<LstmTrace> {
    let mut state = LstmState::zeros(weights.hidden);
    check_window(window, weights, &state)?;
    let mut steps = Vec::with_capacity(window.steps.len());
    for x in &window.steps {
        let s = step(weights, x, &state);
        let h = (0..weights.hidden)
            .map(|j| s.gates[GATE_OUTPUT][j] * s.c[j].tanh())
            .collect();
        state = LstmState { h, c: s.c.clone() };
        steps.push(s);
    }
    Ok(LstmTrace {
        steps,
        final_state: state,
    })
}

/// Backpropagation through time: accumulates into `grads` the gradient of
/// a loss whose derivative with respect to the final hidden state is
/// `dh_final`.
pub fn lstm_backward(trace: &LstmTrace, weights: &LstmWeights, dh_final: &[f64], grads: &mut LstmWeights) {
    let (d, n) = (weights.hidden, weights.input_dim);
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; d];
    let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; d]);
    for s in trace.steps.iter().rev() {
        let [i, f, g, o] = &s.gates;
        for j in 0..d {
            let tc = s.c[j].tanh();
            let do_ = dh[j] * tc;
            dc[j] += dh[j] * o[j] * (1.0 - tc * tc);
            dz[GATE_INPUT][j] = dc[j] * g[j] * i[j] * (1.0 - i[j]);
            dz[GATE_FORGET][j] = dc[j] * s.c_prev[j] * f[j] * (1.0 - f[j]);
            dz[GATE_CELL][j] = dc[j] * i[j] * (1.0 - g[j] * g[j]);
            dz[GATE_OUTPUT][j] = do_ * o[j] * (1.0 - o[j]);
            dc[j] *= f[j];
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        for (gate, dz) in dz.iter().enumerate() {
            let w = &weights.gates[gate];
            let gw = &mut grads.gates[gate];
            for r in 0..d {
                let z = dz[r];
                if z == 0.0 {
                    continue;
                }
                gw.bias[r] += z;
                for (acc, x) in gw.input[r * n..(r + 1) * n].iter_mut().zip(&s.x) {
                    *acc += z * x;
                }
                for (acc, hp) in gw.recurrent[r * d..(r + 1) * d].iter_mut().zip(&s.h_prev) {
                    *acc += z * hp;
                }
                for (dhp, u) in dh.iter_mut().zip(&w.recurrent[r * d..(r + 1) * d]) {
                    *dhp += z * u;
                }
            }
        }
    }
}

/// Affine read-out of the hidden state followed by softplus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproHead {
    pub w: Vec<f64>,
    pub b: f64,
}

impl ReproHead {
    pub fn init<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        ReproHead {
            w: (0..hidden).map(|_| rng.random_range(-k..=k)).collect(),
            b: rng.random_range(-k..=k),
        }
    }

    /// A head that ignores the hidden state and always yields `r`.
    pub fn constant(hidden: usize, r: f64) -> Self {
        ReproHead {
            w: vec![0.0; hidden],
            b: crate::hawkes::softplus_inv(r),
        }
    }

    pub fn activation(&self, h: &[f64]) -> f64 {
        self.b + self.w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// R = softplus(wᵀh + b).
pub fn reproduction(state: &LstmState, head: &ReproHead) -> f64 {
    softplus(head.activation(&state.h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::data::RegionId;

    fn toy_record() -> RegionRecord {
        // mobility of day t is [t, -t]; cases of day t is 10 t
        let n = 6;
        RegionRecord::new(
            RegionId::nation("X"),
            (1..=n as u64).map(|t| 10 * t).collect(),
            (1..=n).map(|t| vec![t as f64, -(t as f64)]).collect(),
            vec![0; n],
            10_000,
            NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        )
        .unwrap()
    }

    fn toy_config(lag: usize, delta: usize) -> ModelConfig {
        ModelConfig {
            lag,
            delta,
            mobility_dim: 2,
            hidden: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn feature_index_arithmetic() {
        let rec = toy_record();
        let win = build_features(&rec, DayIndex::new(4).unwrap(), &toy_config(2, 1)).unwrap();
        let norm = 10_001f64.ln();
        assert_eq!(win.steps.len(), 2);
        // (m(1), C(2)) then (m(2), C(3))
        assert_eq!(win.steps[0], vec![0.01, -0.01, 21f64.ln() / norm]);
        assert_eq!(win.steps[1], vec![0.02, -0.02, 31f64.ln() / norm]);
    }

    #[test]
    fn zero_inputs_give_zero_features() {
        let rec = RegionRecord::new(
            RegionId::nation("X"),
            vec![0; 5],
            vec![vec![0.0; 2]; 5],
            vec![0; 5],
            50,
            NaiveDate::from_ymd_opt(2020, 3, 2).unwrap(),
        )
        .unwrap();
        let win = build_features(&rec, DayIndex::new(5).unwrap(), &toy_config(2, 2)).unwrap();
        assert!(win.steps.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn count_equal_population_normalizes_to_one() {
        let series = Series {
            counts: vec![0.0, 500.0],
            mobility: vec![vec![0.0]; 2],
            vaccinated: vec![0.0; 2],
            population: 500.0,
        };
        let win = features_from_series(&series, 3, 1, 1).unwrap();
        assert_eq!(win.steps[0][1], 1.0);
    }

    #[test]
    fn insufficient_history() {
        let rec = toy_record();
        let err = build_features(&rec, DayIndex::new(3).unwrap(), &toy_config(2, 1)).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory(_)));
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let w = LstmWeights::zeros(4, 3);
        let window = FeatureWindow {
            steps: vec![vec![1.0, -2.0, 0.5]; 5],
        };
        let s = lstm_forward(&window, &w, &LstmState::zeros(4)).unwrap();
        assert!(s.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_window_zero_bias_gives_zero_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = LstmWeights::init(4, 3, &mut rng);
        w.gates.iter_mut().for_each(|g| g.bias.iter_mut().for_each(|b| *b = 0.0));
        let window = FeatureWindow {
            steps: vec![vec![0.0; 3]; 6],
        };
        let s = lstm_forward(&window, &w, &LstmState::zeros(4)).unwrap();
        assert!(s.h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let w = LstmWeights::zeros(4, 3);
        let window = FeatureWindow {
            steps: vec![vec![0.0; 2]],
        };
        assert!(matches!(
            lstm_forward(&window, &w, &LstmState::zeros(4)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn trace_matches_plain_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = LstmWeights::init(5, 3, &mut rng);
        let window = FeatureWindow {
            steps: (0..7).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        };
        let a = lstm_forward(&window, &w, &LstmState::zeros(5)).unwrap();
        let b = lstm_forward_trace(&window, &w).unwrap().final_state;
        assert_eq!(a, b);
        assert!(a.h.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn reproduction_examples() {
        let state = LstmState { h: vec![1.0, 2.0], c: vec![0.0; 2] };
        let head = |b: f64| ReproHead { w: vec![0.5, -0.25], b };
        assert!((reproduction(&state, &head(0.0)) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((reproduction(&state, &head(20.0)) - 20.0).abs() < 1e-8);
        let small = reproduction(&state, &head(-20.0));
        assert!((small - 2.061153618e-9).abs() < 1e-17);
        assert!(small > 0.0);
    }
}
