//! Run configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::CorpusSpec;
use crate::error::{Error, Result};
use crate::eval::PipelineOptions;
use crate::stages::{ClsTrainConfig, DefectTrainConfig, SectionTrainConfig, ShipTrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub ship: ShipTrainConfig,
    pub sections: SectionTrainConfig,
    pub defects: DefectTrainConfig,
    pub classifier: ClsTrainConfig,
    pub pipeline: PipelineOptions,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            corpus: CorpusSpec::default(),
            ship: ShipTrainConfig::default(),
            sections: SectionTrainConfig::default(),
            defects: DefectTrainConfig::default(),
            classifier: ClsTrainConfig::default(),
            pipeline: PipelineOptions::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::validation("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Encode(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.ship.validate()?;
        self.sections.schedule.validate("sections.schedule")?;
        self.defects.validate()?;
        self.classifier.validate()?;
        if !(self.pipeline.cls_threshold > 0.0 && self.pipeline.cls_threshold < 1.0) {
            return Err(Error::validation(
                "pipeline.cls_threshold",
                "must lie in (0, 1)",
            ));
        }
        Ok(())
    }

    /// Seed for a named job, so stages draw independent streams from one
    /// run seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in stage.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        }
        h ^ self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}
