use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{group_by_regime, FlowRegime, LabelBlock, Provenance, Table, FIELD_POINTS};
use crate::error::{Error, Result};
use crate::models::{BatchOutput, ModelKind};
use crate::nn::Tensor;

/// Trade-off weights of the auxiliary blocks relative to the drag term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    #[serde(rename = "lambda_P")]
    pub lambda_p: f64,
    #[serde(rename = "lambda_V")]
    pub lambda_v: f64,
    #[serde(rename = "lambda_FP")]
    pub lambda_fp: f64,
    #[serde(rename = "lambda_FS")]
    pub lambda_fs: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_p: 1e-4,
            lambda_v: 1e-3,
            lambda_fp: 0.01,
            lambda_fs: 0.01,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            lambda_p: 0.0,
            lambda_v: 0.0,
            lambda_fp: 0.0,
            lambda_fs: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_P", self.lambda_p),
            ("lambda_V", self.lambda_v),
            ("lambda_FP", self.lambda_fp),
            ("lambda_FS", self.lambda_fs),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-block multipliers actually applied to each block's mean squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockWeights {
    pub drag: f64,
    pub pressure_field: f64,
    pub velocity_field: f64,
    pub pressure_component: f64,
    pub shear_component: f64,
}

impl From<LossWeights> for BlockWeights {
    fn from(w: LossWeights) -> Self {
        Self {
            drag: 1.0,
            pressure_field: w.lambda_p,
            velocity_field: w.lambda_v,
            pressure_component: w.lambda_fp,
            shear_component: w.lambda_fs,
        }
    }
}

impl BlockWeights {
    /// Weights for training `kind`.
    ///
    /// The single-head `dnn_plus_*` models treat their 11 outputs as one
    /// unweighted regression target, so drag and field get 1/11 and 10/11.
    pub fn for_kind(kind: ModelKind, w: LossWeights) -> Self {
        let full = BlockWeights::from(w);
        let mut b = BlockWeights {
            drag: 1.0,
            pressure_field: 0.0,
            velocity_field: 0.0,
            pressure_component: 0.0,
            shear_component: 0.0,
        };
        let width = 1.0 + FIELD_POINTS as f64;
        match kind {
            ModelKind::Phydnn | ModelKind::PhydnnFxOnly => return full,
            ModelKind::DnnPlusPres => {
                b.drag = 1.0 / width;
                b.pressure_field = FIELD_POINTS as f64 / width;
            }
            ModelKind::DnnPlusVel => {
                b.drag = 1.0 / width;
                b.velocity_field = FIELD_POINTS as f64 / width;
            }
            ModelKind::DnnMtPres => b.pressure_field = full.pressure_field,
            ModelKind::DnnMtVel => b.velocity_field = full.velocity_field,
            ModelKind::Dnn | ModelKind::MeanBaseline | ModelKind::LinearRegression => {}
        }
        b
    }

    pub fn get(&self, block: LabelBlock) -> f64 {
        match block {
            LabelBlock::Drag => self.drag,
            LabelBlock::PressureField => self.pressure_field,
            LabelBlock::VelocityField => self.velocity_field,
            LabelBlock::PressureComponent => self.pressure_component,
            LabelBlock::ShearComponent => self.shear_component,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeMeans {
    pub mean_pressure: f64,
    pub mean_velocity: f64,
    pub mean_drag: f64,
    pub sample_count: usize,
}

/// Per-regime label means of a (training) table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeAggregates {
    pub entries: BTreeMap<FlowRegime, RegimeMeans>,
    pub provenance: Provenance,
}

impl RegimeAggregates {
    /// Means over every sample of each regime present in `table`, in the table's units.
    pub fn from_table(table: &Table) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::invalid(
                "cannot compute regime aggregates of an empty table",
            ));
        }
        let entries = group_by_regime(&table.regimes)
            .into_iter()
            .map(|(regime, rows)| {
                let field_mean = |block: LabelBlock| {
                    let t = table.label_block(block, &rows);
                    t.sum() / t.len() as f64
                };
                let means = RegimeMeans {
                    mean_pressure: field_mean(LabelBlock::PressureField),
                    mean_velocity: field_mean(LabelBlock::VelocityField),
                    mean_drag: field_mean(LabelBlock::Drag),
                    sample_count: rows.len(),
                };
                (regime, means)
            })
            .collect();
        Ok(Self {
            entries,
            provenance: table.provenance,
        })
    }

    pub fn get(&self, regime: FlowRegime) -> Result<&RegimeMeans> {
        self.entries.get(&regime).ok_or(Error::UnknownRegime {
            reynolds: regime.reynolds(),
            solid_fraction: regime.solid_fraction(),
        })
    }
}

/// Loss terms of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub phy: f64,
    pub total: f64,
}

fn check_batch(
    out: &BatchOutput,
    labels: &Tensor,
    regimes: Option<&[FlowRegime]>,
) -> Result<usize> {
    let b = out.batch();
    let (rows, _) = labels.expect_rank2("labels")?;
    if rows != b {
        return Err(Error::shape("outputs vs labels", &[b], &[rows]));
    }
    if let Some(r) = regimes {
        if r.len() != b {
            return Err(Error::shape("outputs vs regime keys", &[b], &[r.len()]));
        }
    }
    if b == 0 {
        return Err(Error::invalid("loss of an empty batch"));
    }
    Ok(b)
}

/// MSE of one predicted block against its label block, with its gradient.
///
/// A prediction narrower than the label block (the x-only component heads)
/// is compared against the leading label columns.
fn block_mse(pred: &Tensor, labels: &Tensor, block: LabelBlock) -> Result<(f64, Tensor)> {
    let (b, w) = pred.expect_rank2("prediction block")?;
    if w == 0 || w > block.width() {
        return Err(Error::shape(
            "prediction block width",
            pred.shape(),
            &[b, block.width()],
        ));
    }
    let first = block.columns().start;
    let n = (b * w) as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut sum = 0.0;
    for i in 0..b {
        let p = pred.row(i);
        let y = &labels.row(i)[first..first + w];
        let g = &mut grad.values_mut()[i * w..(i + 1) * w];
        for j in 0..w {
            let d = p[j] - y[j];
            sum += d * d;
            g[j] = 2.0 * d / n;
        }
    }
    Ok((sum / n, grad))
}

/// Weighted multi-task MSE and its gradient w.r.t. every output block.
///
/// Blocks the model does not emit contribute nothing.
pub fn loss_mse_with_grad(
    out: &BatchOutput,
    labels: &Tensor,
    w: &BlockWeights,
) -> Result<(f64, BatchOutput)> {
    check_batch(out, labels, None)?;
    let mut grads = out.zeros_like();
    let mut total = 0.0;
    for block in LabelBlock::ALL {
        let Some(pred) = out.block(block) else {
            continue;
        };
        let weight = w.get(block);
        let (value, mut g) = block_mse(pred, labels, block)?;
        total += weight * value;
        g.scale(weight);
        *grads.block_mut(block).expect("zeros_like keeps blocks") = g;
    }
    Ok((total, grads))
}

pub fn loss_mse(out: &BatchOutput, labels: &Tensor, w: &BlockWeights) -> Result<f64> {
    Ok(loss_mse_with_grad(out, labels, w)?.0)
}

/// Aggregate-supervision loss over the regimes present in the batch, with its gradient.
///
/// For each regime, the mean predicted pressure (and velocity) over its
/// samples and all field points is pulled towards the stored regime mean.
pub fn loss_phy_with_grad(
    out: &BatchOutput,
    regimes: &[FlowRegime],
    aggregates: &RegimeAggregates,
) -> Result<(f64, BatchOutput)> {
    let b = out.batch();
    if regimes.len() != b {
        return Err(Error::shape(
            "outputs vs regime keys",
            &[b],
            &[regimes.len()],
        ));
    }
    let (Some(p), Some(v)) = (&out.pressure_field, &out.velocity_field) else {
        return Err(Error::invalid(
            "aggregate loss needs pressure and velocity field outputs",
        ));
    };
    let width = p.shape()[1];
    let mut grads = out.zeros_like();
    let mut total = 0.0;
    for (regime, rows) in group_by_regime(regimes) {
        let target = aggregates.get(regime)?;
        let n = (rows.len() * width) as f64;
        for (field, mean, block) in [
            (p, target.mean_pressure, LabelBlock::PressureField),
            (v, target.mean_velocity, LabelBlock::VelocityField),
        ] {
            // One flat running sum, the same order `RegimeAggregates::from_table` uses,
            // so labels fed back against their own aggregates give exactly 0.
            let mu = rows.iter().flat_map(|&i| field.row(i)).sum::<f64>() / n;
            let d = mu - mean;
            total += d * d;
            let g = 2.0 * d / n;
            let gt = grads.block_mut(block).expect("zeros_like keeps blocks");
            for &i in &rows {
                gt.values_mut()[i * width..(i + 1) * width].fill(g);
            }
        }
    }
    Ok((total, grads))
}

pub fn loss_phy(
    out: &BatchOutput,
    regimes: &[FlowRegime],
    aggregates: &RegimeAggregates,
) -> Result<f64> {
    Ok(loss_phy_with_grad(out, regimes, aggregates)?.0)
}

/// `loss_mse + phy_weight · loss_phy` (the latter only when `aggregates` is given).
pub fn total_loss_with_grad(
    out: &BatchOutput,
    labels: &Tensor,
    regimes: &[FlowRegime],
    w: &BlockWeights,
    aggregates: Option<&RegimeAggregates>,
    phy_weight: f64,
) -> Result<(LossBreakdown, BatchOutput)> {
    check_batch(out, labels, Some(regimes))?;
    let (mse, mut grads) = loss_mse_with_grad(out, labels, w)?;
    let mut phy = 0.0;
    if let Some(agg) = aggregates {
        let (value, g) = loss_phy_with_grad(out, regimes, agg)?;
        phy = value;
        for block in [LabelBlock::PressureField, LabelBlock::VelocityField] {
            let mut gb = g.block(block).expect("checked present").clone();
            gb.scale(phy_weight);
            grads
                .block_mut(block)
                .expect("same layout")
                .add_assign(&gb)?;
        }
    }
    let total = mse + phy_weight * phy;
    Ok((LossBreakdown { mse, phy, total }, grads))
}

pub fn total_loss(
    out: &BatchOutput,
    labels: &Tensor,
    regimes: &[FlowRegime],
    w: &BlockWeights,
    aggregates: Option<&RegimeAggregates>,
    phy_weight: f64,
) -> Result<LossBreakdown> {
    Ok(total_loss_with_grad(out, labels, regimes, w, aggregates, phy_weight)?.0)
}
