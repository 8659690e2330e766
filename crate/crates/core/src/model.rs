//! Persistable model state: one versioned JSON document with the
//! architecture, per-layer weight and bias arrays (row-major, lossless
//! round-trip formatting), the fitted scaler, the calibrated threshold, and
//! the training configuration used.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{Layer, ModelConfig, Parameters};
use crate::detect::Threshold;
use crate::error::{Error, Result};
use crate::scale::ScalerParams;
use crate::train::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub format_version: u32,
    pub model: ModelConfig,
    pub layers: Vec<Layer<f64>>,
    pub scaler: ScalerParams<f64>,
    pub threshold: Option<Threshold<f64>>,
    pub train_config: TrainConfig,
}

impl ModelState {
    pub fn new(
        model: ModelConfig,
        params: &Parameters<f64>,
        scaler: ScalerParams<f64>,
        threshold: Option<Threshold<f64>>,
        train_config: TrainConfig,
    ) -> Result<Self> {
        let state = ModelState {
            format_version: FORMAT_VERSION,
            model,
            layers: params.layers.clone(),
            scaler,
            threshold,
            train_config,
        };
        state.check_shapes()?;
        Ok(state)
    }

    fn check_shapes(&self) -> Result<()> {
        let dims = self.model.layer_dims();
        if self.layers.len() + 1 != dims.len() {
            return Err(Error::data(format!(
                "layer count {} does not match architecture {:?}",
                self.layers.len(),
                dims
            )));
        }
        for (layer, pair) in self.layers.iter().zip(dims.windows(2)) {
            if layer.fan_in != pair[0] || layer.fan_out != pair[1] {
                return Err(Error::data(format!(
                    "layer shape {}x{} does not match architecture {:?}",
                    layer.fan_out, layer.fan_in, dims
                )));
            }
            if layer.weights.len() != layer.fan_in * layer.fan_out
                || layer.biases.len() != layer.fan_out
            {
                return Err(Error::data("layer array lengths inconsistent with shape"));
            }
        }
        Ok(())
    }

    /// Rebuilds runnable parameters from the stored arrays.
    pub fn parameters(&self) -> Result<Parameters<f64>> {
        self.check_shapes()?;
        Ok(Parameters {
            layers: self.layers.clone(),
            hidden_activation: self.model.hidden_activation,
            output_activation: self.model.output_activation,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // read the version first so an old document fails with a clear message
        #[derive(Deserialize)]
        struct VersionProbe {
            format_version: u32,
        }
        let probe: VersionProbe = serde_json::from_str(text)?;
        if probe.format_version != FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                probe.format_version
            )));
        }
        let state: ModelState = serde_json::from_str(text)?;
        state.check_shapes()?;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::init;
    use crate::detect::DEFAULT_K;

    fn sample_state(threshold: Option<Threshold<f64>>) -> ModelState {
        let config = ModelConfig {
            node_size: 16,
            ..ModelConfig::default()
        };
        let params: Parameters<f64> = init(&config, 13).unwrap();
        let scaler = ScalerParams {
            min: vec![0.0; 5],
            max: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            degenerate: vec![false; 5],
        };
        ModelState::new(
            config,
            &params,
            scaler,
            threshold,
            TrainConfig::tuned_profile(13),
        )
        .unwrap()
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let state = sample_state(Some(Threshold {
            value: 1.0 / 3.0,
            k: DEFAULT_K,
            source_count: 100,
        }));
        let json = state.to_json().unwrap();
        let back = ModelState::from_json(&json).unwrap();
        assert_eq!(back, state);
        // weights survive with full precision
        assert_eq!(back.layers[0].weights, state.layers[0].weights);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let state = sample_state(None);
        let json = state
            .to_json()
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        let err = ModelState::from_json(&json).unwrap_err();
        assert!(err
            .to_string()
            .contains("unsupported model format version 99"));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = sample_state(None);
        state.layers[0].weights.pop();
        let err = ModelState::from_json(&state.to_json().unwrap()).unwrap_err();
        assert!(err.to_string().contains("inconsistent"));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let state = sample_state(None);
        state.save(&path).unwrap();
        assert_eq!(ModelState::load(&path).unwrap(), state);
    }
}
