use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelParams};
use crate::Error;

pub const CHECKPOINT_FORMAT: &str = "minerf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON container: configuration echo plus every parameter matrix.
///
/// Floats are written with shortest round-trip formatting, so loading a
/// saved checkpoint reproduces the parameters bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Optimiser steps taken before this snapshot.
    pub iteration: usize,
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(model: &Model, iteration: usize) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            iteration,
            config: model.config,
            params: model.params.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, Error> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Json(origin.to_string(), e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("{origin}: not a checkpoint (format {:?})", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "{origin}: checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Rebuilds the model, checking that the parameters fit the configuration.
    pub fn into_model(self) -> Result<Model, Error> {
        Model::with_params(self.config, self.params)
    }
}
