use serde::{Deserialize, Serialize};

use super::{feature_columns, label_columns, Provenance, Table, FEATURE_DIM, LABEL_DIM};
use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Per-column mean and population standard deviation of the fitting split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub label_mean: Vec<f64>,
    pub label_std: Vec<f64>,
    pub provenance: Provenance,
}

fn column_stats(m: &Tensor, names: &[String]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (rows, cols) = m.expect_rank2("standardization input")?;
    let n = rows as f64;
    let mut mean = vec![0.0; cols];
    for r in 0..rows {
        for (acc, v) in mean.iter_mut().zip(m.row(r)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; cols];
    for r in 0..rows {
        for ((acc, v), mu) in var.iter_mut().zip(m.row(r)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    for (c, s) in std.iter().enumerate() {
        // Columns whose spread is at rounding level are constant for practical purposes.
        if *s <= 1e-12 * mean[c].abs().max(1.0) {
            return Err(Error::ConstantColumn(names[c].clone()));
        }
    }
    Ok((mean, std))
}

pub fn fit_standardization(train: &Table) -> Result<StandardizationStats> {
    if train.is_empty() {
        return Err(Error::invalid(
            "cannot fit standardization on an empty split",
        ));
    }
    let (feature_mean, feature_std) = column_stats(&train.features, feature_columns())?;
    let (label_mean, label_std) = column_stats(&train.labels, label_columns())?;
    Ok(StandardizationStats {
        feature_mean,
        feature_std,
        label_mean,
        label_std,
        provenance: train.provenance,
    })
}

fn transform(m: &Tensor, mean: &[f64], std: &[f64], dir: Direction) -> Result<Tensor> {
    let (rows, cols) = m.expect_rank2("standardization input")?;
    if cols != mean.len() {
        return Err(Error::shape(
            "standardization columns",
            &[cols],
            &[mean.len()],
        ));
    }
    let mut out = m.clone();
    for r in 0..rows {
        let row = &mut out.values_mut()[r * cols..(r + 1) * cols];
        for ((v, mu), sd) in row.iter_mut().zip(mean).zip(std) {
            *v = match dir {
                Direction::Forward => (*v - mu) / sd,
                Direction::Inverse => *v * sd + mu,
            };
        }
    }
    Ok(out)
}

pub fn apply_standardization(
    table: &Table,
    stats: &StandardizationStats,
    dir: Direction,
) -> Result<Table> {
    Ok(Table {
        features: transform(
            &table.features,
            &stats.feature_mean,
            &stats.feature_std,
            dir,
        )?,
        labels: transform(&table.labels, &stats.label_mean, &stats.label_std, dir)?,
        regimes: table.regimes.clone(),
        provenance: table.provenance,
    })
}

impl StandardizationStats {
    /// Maps one standardized label column back to physical units.
    pub fn destandardize_label(&self, column: usize, z: f64) -> f64 {
        z * self.label_std[column] + self.label_mean[column]
    }

    /// De-standardizes a `rows × width` block whose columns start at label column `first`.
    pub fn destandardize_block(&self, block: &Tensor, first: usize) -> Result<Tensor> {
        let (_, width) = block.expect_rank2("label block")?;
        if first + width > LABEL_DIM {
            return Err(Error::shape("label block", &[first, width], &[LABEL_DIM]));
        }
        transform(
            block,
            &self.label_mean[first..first + width],
            &self.label_std[first..first + width],
            Direction::Inverse,
        )
    }

    pub fn feature_dim(&self) -> usize {
        debug_assert_eq!(self.feature_mean.len(), FEATURE_DIM);
        self.feature_mean.len()
    }
}
