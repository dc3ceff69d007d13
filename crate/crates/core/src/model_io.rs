//! On-disk model format: a JSON document holding the configuration and
//! named parameter arrays encoded as base64 little-endian f64.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::data::ModelConfig;
use crate::error::{Error, Result};
use crate::model::HawkesParams;
use crate::repro::{GATE_CELL, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};

pub const FORMAT_TAG: &str = "covihawkes-model-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedArray {
    pub shape: Vec<usize>,
    pub data: String,
}

impl EncodedArray {
    fn encode(shape: Vec<usize>, values: &[f64]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        EncodedArray {
            shape,
            data: STANDARD.encode(bytes),
        }
    }

    fn decode(&self, name: &str) -> Result<Vec<f64>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::ModelFormat(format!("array `{name}`: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::ModelFormat(format!("array `{name}` has a truncated value")));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let expected: usize = self.shape.iter().product();
        if values.len() != expected {
            return Err(Error::ModelFormat(format!(
                "array `{name}` holds {} values but its shape {:?} needs {expected}",
                values.len(),
                self.shape
            )));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub region: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub arrays: BTreeMap<String, EncodedArray>,
}

const GATE_NAMES: [(usize, &str); 4] = [(GATE_INPUT, "input"), (GATE_FORGET, "forget"), (GATE_CELL, "cell"), (GATE_OUTPUT, "output")];

/// A trained model with the configuration it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub region: String,
    pub config: ModelConfig,
    pub params: HawkesParams,
}

impl SavedModel {
    pub fn to_document(&self) -> ModelDocument {
        let p = &self.params;
        let (d, n) = (p.lstm.hidden, p.lstm.input_dim);
        let mut arrays = BTreeMap::new();
        arrays.insert("base.raw".to_owned(), EncodedArray::encode(vec![1], &[p.base.raw]));
        arrays.insert("lags.logits".to_owned(), EncodedArray::encode(vec![p.lags.logits.len()], &p.lags.logits));
        for (idx, name) in GATE_NAMES {
            let gate = &p.lstm.gates[idx];
            arrays.insert(format!("lstm.{name}.input"), EncodedArray::encode(vec![d, n], &gate.input));
            arrays.insert(format!("lstm.{name}.recurrent"), EncodedArray::encode(vec![d, d], &gate.recurrent));
            arrays.insert(format!("lstm.{name}.bias"), EncodedArray::encode(vec![d], &gate.bias));
        }
        arrays.insert("head.w".to_owned(), EncodedArray::encode(vec![d], &p.head.w));
        arrays.insert("head.b".to_owned(), EncodedArray::encode(vec![1], &[p.head.b]));
        ModelDocument {
            format: FORMAT_TAG.to_owned(),
            region: self.region.clone(),
            seed: self.config.optimizer.seed,
            config: self.config.clone(),
            arrays,
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        if doc.format != FORMAT_TAG {
            return Err(Error::ModelFormat(format!(
                "unsupported format tag `{}`, expected `{FORMAT_TAG}`",
                doc.format
            )));
        }
        doc.config.validate()?;
        let take = |name: &str| -> Result<Vec<f64>> {
            doc.arrays
                .get(name)
                .ok_or_else(|| Error::ModelFormat(format!("missing array `{name}`")))?
                .decode(name)
        };
        let scalar = |name: &str| -> Result<f64> {
            let v = take(name)?;
            if v.len() != 1 {
                return Err(Error::ModelFormat(format!("array `{name}` must hold one value")));
            }
            Ok(v[0])
        };
        let mut params = HawkesParams::zeros(&doc.config);
        params.base.raw = scalar("base.raw")?;
        params.lags.logits = take("lags.logits")?;
        for (idx, name) in GATE_NAMES {
            let gate = &mut params.lstm.gates[idx];
            gate.input = take(&format!("lstm.{name}.input"))?;
            gate.recurrent = take(&format!("lstm.{name}.recurrent"))?;
            gate.bias = take(&format!("lstm.{name}.bias"))?;
        }
        params.head.w = take("head.w")?;
        params.head.b = scalar("head.b")?;
        params
            .check_shapes(&doc.config)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let expected = HawkesParams::zeros(&doc.config);
        for (got, want) in params.lstm.gates.iter().zip(&expected.lstm.gates) {
            if got.input.len() != want.input.len() || got.recurrent.len() != want.recurrent.len() || got.bias.len() != want.bias.len() {
                return Err(Error::ModelFormat("LSTM array shapes do not match the configuration".into()));
            }
        }
        Ok(SavedModel {
            region: doc.region.clone(),
            config: doc.config.clone(),
            params,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
