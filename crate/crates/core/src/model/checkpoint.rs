//! Parameter checkpoints.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "hlhg-checkpoint",
//!   "version": 1,
//!   "config": { ...ModelConfig... },
//!   "matrices": [
//!     { "name": "W1", "rows": 1433, "cols": 16, "data": [ ...row-major f32... ] },
//!     { "name": "W2", "rows": 16, "cols": 7, "data": [ ... ] }
//!   ]
//! }
//! ```
//!
//! Matrices appear in layer order. Shared-weight models store `W1` and `W2`;
//! the concat baseline stores `W1_1..W1_p` then `W2_1..W2_p`. Values are
//! written in shortest round-trip decimal form, so a save/load cycle is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::network::Params;
use crate::tensor::DenseMatrix;

pub const CHECKPOINT_FORMAT: &str = "hlhg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub matrices: Vec<NamedMatrix>,
}

impl Checkpoint {
    pub fn new(config: &ModelConfig, params: &Params<f32>) -> Self {
        let matrices = params
            .named()
            .into_iter()
            .map(|(name, m)| NamedMatrix {
                name,
                rows: m.rows(),
                cols: m.cols(),
                data: m.data().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            matrices,
        }
    }

    /// Rebuilds the parameters, checking names and shapes against the
    /// embedded configuration.
    pub fn params(&self) -> Result<Params<f32>> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        self.config.validate()?;
        let per_layer = self.matrices.len() / 2;
        if per_layer == 0 || !self.matrices.len().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "checkpoint holds {} matrices",
                self.matrices.len()
            )));
        }
        let mut mats = Vec::with_capacity(self.matrices.len());
        for nm in &self.matrices {
            mats.push(DenseMatrix::from_vec(nm.rows, nm.cols, nm.data.clone())?);
        }
        let layer2 = mats.split_off(per_layer);
        let params = Params {
            layer1: mats,
            layer2,
        };
        params.check_against(&self.config)?;
        let expected: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        let found: Vec<&str> = self.matrices.iter().map(|m| m.name.as_str()).collect();
        if expected != found {
            return Err(Error::Config(format!(
                "checkpoint matrix names {found:?}, expected {expected:?}"
            )));
        }
        Ok(params)
    }
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &Params<f32>) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::new(config, params))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, Params<f32>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    let params = ckpt.params()?;
    Ok((ckpt.config, params))
}
