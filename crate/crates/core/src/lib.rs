//! Daily count forecasting with a discrete-time Hawkes process whose
//! reproduction number is driven by lagged mobility through an LSTM.

pub mod cli;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod forecast;
pub mod hawkes;
pub mod ingest;
pub mod model;
pub mod model_io;
pub mod objective;
pub mod repro;
pub mod sampling;
pub mod scenario;
pub mod synth;
pub mod trainer;

pub use data::{DayIndex, ModelConfig, OptimizerSettings, RegionId, RegionLevel, RegionRecord, Series, TrainableGroups};
pub use error::{Error, Result};
pub use model::HawkesParams;
