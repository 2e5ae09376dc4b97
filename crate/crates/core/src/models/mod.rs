//! PhyDNN and the comparison architectures, wired over the `nn` layers.

mod kind;
mod network;
mod output;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{group_by_regime, FlowRegime, LabelBlock, Table, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, LayerSpec, ParameterStore, Tensor};

pub use kind::ModelKind;
pub use network::{Forward, Network, Trace};
pub use output::{BatchOutput, ModelOutput};

/// Shape of every architecture; only PhyDNN uses the conv and component fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchitectureConfig {
    pub input_dim: usize,
    pub hidden_width: usize,
    /// Shared relu layers before the field heads.
    pub shared_layers: usize,
    pub field_dim: usize,
    pub conv_out_channels: usize,
    pub conv_kernel: usize,
    pub conv_padding: usize,
    /// Length of the flattened pooled feature vector.
    pub pooled_features: usize,
    pub component_dim: usize,
    /// Nonlinearity of the shared block (and of all DNN hidden layers).
    pub shared_activation: Activation,
    pub dnn_hidden_layers: usize,
    pub mt_shared_layers: usize,
    pub mt_branch_layers: usize,
    pub seed: u64,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            input_dim: FEATURE_DIM,
            hidden_width: 128,
            shared_layers: 4,
            field_dim: 10,
            conv_out_channels: 4,
            conv_kernel: 3,
            conv_padding: 1,
            pooled_features: 4,
            component_dim: 3,
            shared_activation: Activation::Relu,
            dnn_hidden_layers: 5,
            mt_shared_layers: 3,
            mt_branch_layers: 2,
            seed: 0,
        }
    }
}

impl ArchitectureConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn conv_out_len(&self) -> Result<usize> {
        let padded = self.field_dim + 2 * self.conv_padding;
        if padded < self.conv_kernel {
            return Err(Error::invalid("conv kernel longer than padded field"));
        }
        Ok(padded - self.conv_kernel + 1)
    }

    /// Pool window that yields `pooled_features` values after flattening.
    pub fn pool_window(&self) -> Result<usize> {
        let total = self.conv_out_channels * self.conv_out_len()?;
        if self.pooled_features == 0 || total % self.pooled_features != 0 {
            return Err(Error::invalid(
                "pooled_features must divide conv output size",
            ));
        }
        let per_channel = self.pooled_features / self.conv_out_channels.max(1);
        if per_channel == 0 || self.pooled_features % self.conv_out_channels != 0 {
            return Err(Error::invalid(
                "pooled_features must be a multiple of conv_out_channels",
            ));
        }
        let len = self.conv_out_len()?;
        if len % per_channel != 0 {
            return Err(Error::invalid(
                "pooled length must divide conv output length",
            ));
        }
        Ok(len / per_channel)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim != FEATURE_DIM {
            return Err(Error::invalid(format!(
                "input_dim is fixed at {FEATURE_DIM}"
            )));
        }
        if self.hidden_width == 0 || self.field_dim == 0 || self.component_dim == 0 {
            return Err(Error::invalid("layer widths must be at least 1"));
        }
        if self.shared_layers == 0 || self.dnn_hidden_layers == 0 || self.mt_shared_layers == 0 {
            return Err(Error::invalid("at least one hidden layer is required"));
        }
        self.pool_window().map(|_| ())
    }
}

/// A built model: kind, configuration, parameters and wiring.
#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ArchitectureConfig,
    pub store: ParameterStore,
    pub network: Network,
}

pub fn build_model(kind: ModelKind, config: &ArchitectureConfig) -> Result<Model> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut store = ParameterStore::new();
    let network = Network::build(kind, config, &mut store, &mut rng)?;
    Ok(Model {
        kind,
        config: config.clone(),
        store,
        network,
    })
}

pub fn parameter_count(model: &Model) -> usize {
    model.store.scalar_count()
}

impl Model {
    /// Inference pass: no caches are kept.
    pub fn forward(&self, features: &Tensor, regimes: &[FlowRegime]) -> Result<BatchOutput> {
        Ok(self
            .network
            .forward(&self.store, features, regimes, false)?
            .output)
    }

    /// Per-sample outputs.
    pub fn predict(&self, features: &Tensor, regimes: &[FlowRegime]) -> Result<Vec<ModelOutput>> {
        Ok(self.forward(features, regimes)?.samples())
    }

    /// Training pass keeping every cache needed by [`Model::backward`].
    pub fn forward_train(&self, features: &Tensor, regimes: &[FlowRegime]) -> Result<Forward> {
        self.network.forward(&self.store, features, regimes, true)
    }

    /// Accumulates parameter gradients for loss gradients `grads` w.r.t. the outputs.
    pub fn backward(&mut self, pass: &Forward, grads: &BatchOutput) -> Result<()> {
        self.network.backward(&mut self.store, pass, grads)
    }

    /// Declared layer shapes, in parameter order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.network.layer_specs(&self.store)
    }

    /// Fits the closed-form kinds directly; returns `false` for kinds trained by gradient descent.
    ///
    /// `train` must already be standardized.
    pub fn fit_closed_form(&mut self, train: &Table) -> Result<bool> {
        match &self.network {
            Network::MeanBaseline { table } => {
                let table = *table;
                let drag: Vec<f64> = train.column(0).collect();
                if drag.is_empty() {
                    return Err(Error::invalid("cannot fit mean baseline on empty data"));
                }
                let overall = drag.iter().sum::<f64>() / drag.len() as f64;
                let groups = group_by_regime(&train.regimes);
                let means: BTreeMap<FlowRegime, f64> = groups
                    .iter()
                    .map(|(r, rows)| {
                        (
                            *r,
                            rows.iter().map(|&i| drag[i]).sum::<f64>() / rows.len() as f64,
                        )
                    })
                    .collect();
                let values = self.store.get_mut(table).value.values_mut();
                for r in FlowRegime::all() {
                    values[r.index()] = means.get(&r).copied().unwrap_or(overall);
                }
                Ok(true)
            }
            Network::Linear(layer) => {
                let (w, b) = (layer.weights, layer.bias);
                let coef = least_squares(
                    &train.features,
                    &train.label_block(LabelBlock::Drag, &(0..train.len()).collect::<Vec<_>>()),
                )?;
                self.store
                    .get_mut(w)
                    .value
                    .values_mut()
                    .copy_from_slice(&coef[..FEATURE_DIM]);
                self.store.get_mut(b).value.values_mut()[0] = coef[FEATURE_DIM];
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Maps field activations through the linear post-field pathway of a PhyDNN.
    pub fn post_field(&self, pressure: &Tensor, velocity: &Tensor) -> Result<BatchOutput> {
        match &self.network {
            Network::Phydnn(net) => Ok(net.post_field(&self.store, pressure, velocity, false)?.0),
            _ => Err(Error::invalid(format!(
                "{} has no field pathway",
                self.kind
            ))),
        }
    }

    /// Maps concatenated component values `[F^P | F^S]` to drag through the output layer.
    pub fn drag_from_components(&self, components: &Tensor) -> Result<Tensor> {
        match &self.network {
            Network::Phydnn(net) => Ok(net.output.forward(&self.store, components)?.0),
            _ => Err(Error::invalid(format!(
                "{} has no component layer",
                self.kind
            ))),
        }
    }
}

/// Ordinary least squares with an intercept, solved through the normal equations.
fn least_squares(x: &Tensor, y: &Tensor) -> Result<Vec<f64>> {
    let (n, d) = x.expect_rank2("least squares design")?;
    if n == 0 {
        return Err(Error::invalid("least squares on empty data"));
    }
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x.row(i)[j] } else { 1.0 });
    let target = DVector::from_column_slice(y.values());
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * target;
    let solution = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?,
    };
    Ok(solution.iter().copied().collect())
}
