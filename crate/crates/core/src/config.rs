//! JSON run configuration shared by the command-line tools.

use serde::{Deserialize, Serialize};

use crate::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::generator::GeneratorSpec;
use crate::inversion::{InversionConfig, Variant};
use crate::objective::LossWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub dataset: u64,
    pub init: u64,
    pub features: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            dataset: 0,
            init: 0,
            features: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    pub flow: FlowParams,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub variant: Variant,
    /// Frames per sequence.
    pub frames: usize,
    /// Sequences in a synthesized dataset.
    pub sequences: usize,
    pub mean_samples: usize,
    pub transfer_scale: f64,
    pub seeds: Seeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorSpec::default(),
            flow: FlowParams::default(),
            weights: LossWeights::default(),
            adam: AdamConfig::default(),
            variant: Variant::Full,
            frames: 5,
            sequences: 20,
            mean_samples: 10_000,
            transfer_scale: 1.0,
            seeds: Seeds::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.flow.validate()?;
        self.weights.validate()?;
        self.adam.validate()?;
        if self.frames < 1 {
            return Err(Error::invalid("frames must be >= 1"));
        }
        if self.mean_samples == 0 {
            return Err(Error::invalid("mean_samples must be >= 1"));
        }
        if !self.transfer_scale.is_finite() {
            return Err(Error::invalid("transfer_scale must be finite"));
        }
        Ok(())
    }

    pub fn inversion(&self) -> InversionConfig {
        InversionConfig {
            variant: self.variant,
            weights: self.weights.clone(),
            adam: self.adam.clone(),
            flow: self.flow.clone(),
            init_seed: self.seeds.init,
            mean_samples: self.mean_samples,
            feature_seed: self.seeds.features,
        }
    }
}
