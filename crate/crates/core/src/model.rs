//! The full learnable parameter set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ModelConfig, Series, TrainableGroups};
use crate::error::{Error, Result};
use crate::hawkes::{BaseRate, LagWeights};
use crate::repro::{features_from_series, lstm_forward, reproduction, LstmState, LstmWeights, ReproHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Base,
    Lags,
    Lstm,
    Head,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::Base, ParamGroup::Lags, ParamGroup::Lstm, ParamGroup::Head];

    pub fn is_trainable(self, mask: &TrainableGroups) -> bool {
        match self {
            ParamGroup::Base => mask.base,
            ParamGroup::Lags => mask.lags,
            ParamGroup::Lstm => mask.lstm,
            ParamGroup::Head => mask.head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub base: BaseRate,
    pub lags: LagWeights,
    pub lstm: LstmWeights,
    pub head: ReproHead,
}

/// Gradient of a scalar loss, stored in the same layout as the parameters.
/// `base.raw` and `lags.logits` hold derivatives with respect to the
/// unconstrained coordinates.
pub type ParamGradient = HawkesParams;

impl HawkesParams {
    /// Seeded initialization: uniform lag weights, μ = 1, LSTM and head
    /// drawn uniformly from ±1/√d with forget-gate bias 1.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm = LstmWeights::init(config.hidden, config.input_dim(), &mut rng);
        let head = ReproHead::init(config.hidden, &mut rng);
        HawkesParams {
            base: BaseRate::from_mu(1.0),
            lags: LagWeights::uniform(config.lag),
            lstm,
            head,
        }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        HawkesParams {
            base: BaseRate { raw: 0.0 },
            lags: LagWeights {
                logits: vec![0.0; config.lag],
            },
            lstm: LstmWeights::zeros(config.hidden, config.input_dim()),
            head: ReproHead {
                w: vec![0.0; config.hidden],
                b: 0.0,
            },
        }
    }

    pub fn mu(&self) -> f64 {
        self.base.mu()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.lags.weights()
    }

    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let checks = [
            ("lag logits", config.lag, self.lags.logits.len()),
            ("LSTM hidden size", config.hidden, self.lstm.hidden),
            ("LSTM input width", config.input_dim(), self.lstm.input_dim),
            ("head weights", config.hidden, self.head.w.len()),
        ];
        for (what, expected, actual) in checks {
            if expected != actual {
                return Err(Error::Shape {
                    what,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    /// Mutable slices over every coordinate, tagged by group, in a fixed
    /// order shared by [`Self::flatten`] and [`Self::assign_flat`].
    fn groups_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out: Vec<(ParamGroup, &mut [f64])> = vec![
            (ParamGroup::Base, std::slice::from_mut(&mut self.base.raw)),
            (ParamGroup::Lags, &mut self.lags.logits[..]),
        ];
        for gate in &mut self.lstm.gates {
            out.push((ParamGroup::Lstm, &mut gate.input[..]));
            out.push((ParamGroup::Lstm, &mut gate.recurrent[..]));
            out.push((ParamGroup::Lstm, &mut gate.bias[..]));
        }
        out.push((ParamGroup::Head, &mut self.head.w[..]));
        out.push((ParamGroup::Head, std::slice::from_mut(&mut self.head.b)));
        out
    }

    /// Every coordinate with its group, in flat order.
    pub fn flatten_tagged(&self) -> Vec<(ParamGroup, f64)> {
        let mut copy = self.clone();
        copy.groups_mut()
            .into_iter()
            .flat_map(|(g, s)| s.iter().map(move |&v| (g, v)).collect::<Vec<_>>())
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.flatten_tagged().into_iter().map(|(_, v)| v).collect()
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let total = self.num_params();
        if values.len() != total {
            return Err(Error::Shape {
                what: "flat parameter vector",
                expected: total,
                actual: values.len(),
            });
        }
        let mut offset = 0;
        for (_, slice) in self.groups_mut() {
            slice.copy_from_slice(&values[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        1 + self.lags.logits.len() + 4 * (self.lstm.gates[0].input.len() + self.lstm.gates[0].recurrent.len() + self.lstm.gates[0].bias.len()) + self.head.w.len() + 1
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    /// R(day) from the network, using the series up to the previous day.
    pub fn reproduction_on(&self, series: &Series, day: usize, config: &ModelConfig) -> Result<f64> {
        let window = features_from_series(series, day, config.lag, config.delta)?;
        let state = lstm_forward(&window, &self.lstm, &LstmState::zeros(self.lstm.hidden))?;
        Ok(reproduction(&state, &self.head))
    }
}
