use serde::{Deserialize, Serialize};

use crate::data::LabelBlock;
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Predictions for one sample; absent blocks are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub drag: f64,
    pub pressure_field: Option<Vec<f64>>,
    pub velocity_field: Option<Vec<f64>>,
    pub pressure_component: Option<Vec<f64>>,
    pub shear_component: Option<Vec<f64>>,
}

/// Batched predictions (or gradients with respect to them), one `batch × width` matrix per block.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub drag: Tensor,
    pub pressure_field: Option<Tensor>,
    pub velocity_field: Option<Tensor>,
    pub pressure_component: Option<Tensor>,
    pub shear_component: Option<Tensor>,
}

impl BatchOutput {
    pub fn drag_only(drag: Tensor) -> Self {
        Self {
            drag,
            pressure_field: None,
            velocity_field: None,
            pressure_component: None,
            shear_component: None,
        }
    }

    pub fn batch(&self) -> usize {
        self.drag.batch()
    }

    pub fn block(&self, block: LabelBlock) -> Option<&Tensor> {
        match block {
            LabelBlock::Drag => Some(&self.drag),
            LabelBlock::PressureField => self.pressure_field.as_ref(),
            LabelBlock::VelocityField => self.velocity_field.as_ref(),
            LabelBlock::PressureComponent => self.pressure_component.as_ref(),
            LabelBlock::ShearComponent => self.shear_component.as_ref(),
        }
    }

    pub fn block_mut(&mut self, block: LabelBlock) -> Option<&mut Tensor> {
        match block {
            LabelBlock::Drag => Some(&mut self.drag),
            LabelBlock::PressureField => self.pressure_field.as_mut(),
            LabelBlock::VelocityField => self.velocity_field.as_mut(),
            LabelBlock::PressureComponent => self.pressure_component.as_mut(),
            LabelBlock::ShearComponent => self.shear_component.as_mut(),
        }
    }

    /// Same block layout, all zeros.
    pub fn zeros_like(&self) -> Self {
        let z = |t: &Option<Tensor>| t.as_ref().map(|t| Tensor::zeros(t.shape()));
        Self {
            drag: Tensor::zeros(self.drag.shape()),
            pressure_field: z(&self.pressure_field),
            velocity_field: z(&self.velocity_field),
            pressure_component: z(&self.pressure_component),
            shear_component: z(&self.shear_component),
        }
    }

    pub fn is_finite(&self) -> bool {
        LabelBlock::ALL
            .iter()
            .filter_map(|&b| self.block(b))
            .all(Tensor::is_finite)
    }

    pub fn sample(&self, i: usize) -> ModelOutput {
        let row = |t: &Option<Tensor>| t.as_ref().map(|t| t.row(i).to_vec());
        ModelOutput {
            drag: self.drag.row(i)[0],
            pressure_field: row(&self.pressure_field),
            velocity_field: row(&self.velocity_field),
            pressure_component: row(&self.pressure_component),
            shear_component: row(&self.shear_component),
        }
    }

    pub fn samples(&self) -> Vec<ModelOutput> {
        (0..self.batch()).map(|i| self.sample(i)).collect()
    }

    /// Re-batches per-sample outputs; all samples must share the same block layout.
    pub fn from_samples(samples: &[ModelOutput]) -> Result<Self> {
        let drag = Tensor::new(
            vec![samples.len(), 1],
            samples.iter().map(|s| s.drag).collect(),
        )?;
        fn stack(
            samples: &[ModelOutput],
            get: impl Fn(&ModelOutput) -> Option<&Vec<f64>>,
        ) -> Result<Option<Tensor>> {
            let Some(first) = samples.first().and_then(&get) else {
                if samples.iter().any(|s| get(s).is_some()) {
                    return Err(Error::invalid("inconsistent output blocks across samples"));
                }
                return Ok(None);
            };
            let width = first.len();
            let mut v = Vec::with_capacity(samples.len() * width);
            for s in samples {
                let row = get(s)
                    .ok_or_else(|| Error::invalid("inconsistent output blocks across samples"))?;
                if row.len() != width {
                    return Err(Error::shape("output block", &[row.len()], &[width]));
                }
                v.extend_from_slice(row);
            }
            Ok(Some(Tensor::new(vec![samples.len(), width], v)?))
        }
        Ok(Self {
            drag,
            pressure_field: stack(samples, |s| s.pressure_field.as_ref())?,
            velocity_field: stack(samples, |s| s.velocity_field.as_ref())?,
            pressure_component: stack(samples, |s| s.pressure_component.as_ref())?,
            shear_component: stack(samples, |s| s.shear_component.as_ref())?,
        })
    }
}
