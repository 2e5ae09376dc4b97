//! Versioned JSON form of a parameter store.
//!
//! Values are written as shortest round-trip decimal text, so a save/load
//! cycle reproduces every `f64` bit-for-bit.

use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDocument {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDocument {
    pub name: String,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: Vec<MomentDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreDocument {
    pub format_version: u32,
    pub entries: Vec<EntryDocument>,
    pub optimizer_state: OptimizerState,
}

impl ParameterStore {
    pub fn to_document(&self) -> StoreDocument {
        let entries = self
            .iter()
            .map(|p| EntryDocument {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                values: p.value.values().to_vec(),
            })
            .collect();
        let moments = self
            .iter()
            .map(|p| MomentDocument {
                name: p.name.clone(),
                first: p.first_moment.clone(),
                second: p.second_moment.clone(),
            })
            .collect();
        StoreDocument {
            format_version: FORMAT_VERSION,
            entries,
            optimizer_state: OptimizerState {
                step: self.step,
                moments,
            },
        }
    }

    /// Rebuilds a store from a document; gradients start at zero.
    pub fn from_document(doc: &StoreDocument) -> Result<Self> {
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.optimizer_state.moments.len() != doc.entries.len() {
            return Err(Error::Checkpoint(
                "optimizer state does not match entries".into(),
            ));
        }
        let mut store = ParameterStore::new();
        for (entry, moments) in doc.entries.iter().zip(&doc.optimizer_state.moments) {
            if entry.name != moments.name {
                return Err(Error::Checkpoint(format!(
                    "optimizer state for `{}` found where `{}` was expected",
                    moments.name, entry.name
                )));
            }
            if entry.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!(
                    "non-finite value in `{}`",
                    entry.name
                )));
            }
            let id = store.insert(
                entry.name.clone(),
                Tensor::new(entry.shape.clone(), entry.values.clone())?,
            )?;
            store.set_moments(id, moments.first.clone(), moments.second.clone())?;
        }
        store.step = doc.optimizer_state.step;
        Ok(store)
    }

    /// Checks that `other` has the same names and shapes in the same order.
    pub fn check_layout(&self, other: &ParameterStore) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.iter().zip(other.iter()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "layout mismatch: `{}` {:?} vs `{}` {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }
}
