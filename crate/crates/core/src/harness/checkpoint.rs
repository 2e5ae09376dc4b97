use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::train::TrainRun;
use crate::data::StandardizationStats;
use crate::error::{Error, Result};
use crate::losses::RegimeAggregates;
use crate::models::{build_model, ArchitectureConfig, Model, ModelKind};
use crate::nn::{ParameterStore, StoreDocument};

/// A trained model together with everything needed to evaluate it on new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    pub store: StoreDocument,
    pub model_kind: ModelKind,
    pub architecture: ArchitectureConfig,
    pub config: TrainConfig,
    pub standardization: StandardizationStats,
    pub aggregates: RegimeAggregates,
    pub phy_aggregates: RegimeAggregates,
    /// Fingerprint of the full dataset the run was split from.
    pub dataset_fingerprint: u64,
}

impl Checkpoint {
    pub fn from_run(run: &TrainRun, config: &TrainConfig, dataset_fingerprint: u64) -> Self {
        Self {
            store: run.model.store.to_document(),
            model_kind: run.model.kind,
            architecture: run.model.config.clone(),
            config: config.clone(),
            standardization: run.prepared.stats.clone(),
            aggregates: run.prepared.aggregates.clone(),
            phy_aggregates: run.prepared.phy_aggregates.clone(),
            dataset_fingerprint,
        }
    }

    /// Rebuilds the model, checking the stored layout against a fresh build.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = build_model(self.model_kind, &self.architecture)?;
        let store = ParameterStore::from_document(&self.store)?;
        model.store.check_layout(&store)?;
        model.store = store;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.store.format_version != crate::nn::checkpoint::FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                c.store.format_version
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
