//! Versioned on-disk model: layout, scaler and parameters as JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use flowguard_core::features::{FEATURE_SCHEMA_VERSION, MODEL_FEATURE_NAMES};
use flowguard_core::TrafficClass;

use crate::model::ModelParameters;
use crate::rounds::Method;
use crate::scaler::Scaler;
use crate::FlError;

pub const MODEL_FORMAT: &str = "flowguard-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub feature_schema: String,
    pub feature_names: Vec<String>,
    pub classes: Vec<String>,
    pub method: Method,
    pub rounds: usize,
    pub seed: u64,
    pub scaler: Scaler,
    pub params: ModelParameters,
}

impl ModelFile {
    pub fn new(method: Method, rounds: usize, seed: u64, scaler: Scaler, params: ModelParameters) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            feature_schema: FEATURE_SCHEMA_VERSION.to_string(),
            feature_names: MODEL_FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            classes: TrafficClass::ALL.iter().map(|c| c.as_str().to_string()).collect(),
            method,
            rounds,
            seed,
            scaler,
            params,
        }
    }

    /// Rejects files that do not match this build's feature extractor.
    pub fn check(&self) -> Result<(), FlError> {
        if self.format != MODEL_FORMAT {
            return Err(FlError::ModelFile(format!("unsupported format {:?}, expected {MODEL_FORMAT:?}", self.format)));
        }
        if self.feature_schema != FEATURE_SCHEMA_VERSION {
            return Err(FlError::SchemaMismatch {
                model: self.feature_schema.clone(),
                extractor: FEATURE_SCHEMA_VERSION.to_string(),
            });
        }
        let n = self.feature_names.len();
        if n != self.params.layout.inputs() || n != self.scaler.width() {
            return Err(FlError::ModelFile(format!(
                "{n} feature names, {} scaler columns, {} model inputs",
                self.scaler.width(),
                self.params.layout.inputs()
            )));
        }
        if self.classes.len() != self.params.layout.outputs() {
            return Err(FlError::ModelFile("class list does not match the output layer".into()));
        }
        if self.params.values.len() != self.params.layout.param_count() {
            return Err(FlError::Layout("parameter vector does not match layout".into()));
        }
        Ok(())
    }

    /// Scales a raw feature row and classifies it.
    pub fn classify(&self, raw: &[f64]) -> Result<(TrafficClass, Vec<f64>), FlError> {
        if raw.len() != self.scaler.width() {
            return Err(FlError::FeatureLength { expected: self.scaler.width(), found: raw.len() });
        }
        let (k, scores) = self.params.predict(&self.scaler.transform(raw))?;
        let class = self.classes[k].parse().map_err(FlError::ModelFile)?;
        Ok((class, scores))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FlError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| FlError::Input(format!("{}: {e}", path.display()));
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        serde_json::to_writer(&mut w, self).map_err(|e| FlError::ModelFile(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FlError> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| FlError::Input(format!("{}: {e}", path.display())))?;
        let m: ModelFile = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| FlError::ModelFile(format!("{}: {e}", path.display())))?;
        m.check()?;
        Ok(m)
    }
}
