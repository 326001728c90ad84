//! Self-describing checkpoint files.
//!
//! A checkpoint is a JSON document. Parameter arrays are stored by name as
//! base64 of their little-endian IEEE-754 bytes, so a save/load round trip is
//! bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Relation, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{DimensionsConfig, ModelParams};
use crate::optimizer::AdamState;

pub const FORMAT: &str = "varndrr-checkpoint";
pub const VERSION: u32 = 1;

pub(crate) mod codec {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(values: &[f64]) -> String {
        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        STANDARD.encode(bytes)
    }

    pub fn decode(text: &str) -> Result<Vec<f64>, String> {
        let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err(format!("{} bytes is not a whole number of f64 values", bytes.len()));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(values))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        decode(&text).map_err(serde::de::Error::custom)
    }

    pub mod nested {
        use super::*;
        use serde::ser::SerializeSeq;

        pub fn serialize<S: Serializer>(values: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(values.len()))?;
            for v in values {
                seq.serialize_element(&encode(v))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let texts = Vec::<String>::deserialize(d)?;
            texts
                .iter()
                .map(|t| decode(t).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub len: usize,
    #[serde(with = "codec")]
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dims: DimensionsConfig,
    pub seed: u64,
    pub task: Relation,
    pub vocab: Vocabulary,
    pub arrays: Vec<NamedArray>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, seed: u64, task: Relation, vocab: &Vocabulary) -> Self {
        let arrays = params
            .arrays()
            .into_iter()
            .map(|(name, a)| NamedArray {
                name,
                len: a.len(),
                data: a.to_vec(),
            })
            .collect();
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            dims: params.dims,
            seed,
            task,
            vocab: vocab.clone(),
            arrays,
            optimizer: None,
        }
    }

    pub fn with_optimizer(mut self, state: AdamState) -> Self {
        self.optimizer = Some(state);
        self
    }

    /// Rebuilds the parameters, checking every array against the declared
    /// dimensions.
    pub fn to_params(&self) -> Result<ModelParams> {
        if self.vocab.d_x() != self.dims.d_x1 {
            return Err(Error::shape(
                "checkpoint",
                format!("vocabulary dimension {}", self.dims.d_x1),
                format!("vocabulary dimension {}", self.vocab.d_x()),
            ));
        }
        let mut params = ModelParams::zeros(self.dims)?;
        let mut slots = params.arrays_mut();
        if slots.len() != self.arrays.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                slots.len(),
                self.arrays.len()
            )));
        }
        for ((name, slot), stored) in slots.iter_mut().zip(&self.arrays) {
            if *name != stored.name {
                return Err(Error::Checkpoint(format!(
                    "expected array {name}, found {}",
                    stored.name
                )));
            }
            if slot.len() != stored.data.len() || stored.len != stored.data.len() {
                return Err(Error::shape(
                    "checkpoint",
                    format!("{name} with {} values", slot.len()),
                    format!("{} values", stored.data.len()),
                ));
            }
            slot.copy_from_slice(&stored.data);
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut writer, self)?;
        std::io::Write::flush(&mut writer).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format {} v{}",
                path.display(),
                ckpt.format,
                ckpt.version
            )));
        }
        ckpt.vocab = ckpt.vocab.reindex()?;
        Ok(ckpt)
    }
}
