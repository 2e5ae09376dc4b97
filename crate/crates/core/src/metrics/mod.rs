use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{group_by_regime, FlowRegime};
use crate::error::{Error, Result};
use crate::losses::RegimeAggregates;

mod aurec;
mod diagnostics;

pub use aurec::{aurec, RelErrorCurve};
pub use diagnostics::{
    field_histogram, field_mean_gaps, pressure_shear_ratio, value_range, FieldHistogram,
    RatioEntry, RatioReport, DEFAULT_BINS,
};

pub const DEFAULT_AUREC_BOUND: f64 = 1.0;

/// `|F̂ − F| / F̄` per sample, with `F̄` the regime's mean drag in `aggregates`.
pub fn relative_errors(
    pred: &[f64],
    truth: &[f64],
    regimes: &[FlowRegime],
    aggregates: &RegimeAggregates,
) -> Result<Vec<f64>> {
    if pred.len() != truth.len() || pred.len() != regimes.len() {
        return Err(Error::shape(
            "predictions, truths, regimes",
            &[pred.len(), truth.len()],
            &[regimes.len()],
        ));
    }
    pred.iter()
        .zip(truth)
        .zip(regimes)
        .map(|((p, t), r)| {
            let mean = aggregates.get(*r)?.mean_drag;
            if !(mean > 0.0) {
                return Err(Error::invalid(format!(
                    "mean drag of {r} is {mean}; relative error needs a positive mean"
                )));
            }
            Ok((p - t).abs() / mean)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeMetrics {
    pub mse: f64,
    pub mre: f64,
    pub aurec: f64,
    pub sample_count: usize,
}

/// Test-set metrics in physical units; `mre` is a percentage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mre: f64,
    pub aurec: f64,
    pub aurec_bound: f64,
    pub sample_count: usize,
    pub per_regime: BTreeMap<FlowRegime, RegimeMetrics>,
}

fn summarize(pred: &[f64], truth: &[f64], rel: &[f64], bound: f64) -> Result<RegimeMetrics> {
    let n = pred.len() as f64;
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let mre = 100.0 * rel.iter().sum::<f64>() / n;
    Ok(RegimeMetrics {
        mse,
        mre,
        aurec: aurec(rel, bound)?,
        sample_count: pred.len(),
    })
}

pub fn compute_metrics(
    pred: &[f64],
    truth: &[f64],
    regimes: &[FlowRegime],
    aggregates: &RegimeAggregates,
    bound: f64,
) -> Result<MetricsReport> {
    if pred.is_empty() {
        return Err(Error::invalid("metrics of an empty prediction set"));
    }
    let rel = relative_errors(pred, truth, regimes, aggregates)?;
    let overall = summarize(pred, truth, &rel, bound)?;
    let mut per_regime = BTreeMap::new();
    for (regime, rows) in group_by_regime(regimes) {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        per_regime.insert(
            regime,
            summarize(&pick(pred), &pick(truth), &pick(&rel), bound)?,
        );
    }
    Ok(MetricsReport {
        mse: overall.mse,
        mre: overall.mre,
        aurec: overall.aurec,
        aurec_bound: bound,
        sample_count: overall.sample_count,
        per_regime,
    })
}

impl MetricsReport {
    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:>14} {:>10} {:>10} {:>8}",
            "regime", "mse", "mre(%)", "aurec", "n"
        );
        let mut row = |name: &str, m: &RegimeMetrics| {
            let _ = writeln!(
                s,
                "{:<16} {:>14.6} {:>10.4} {:>10.6} {:>8}",
                name, m.mse, m.mre, m.aurec, m.sample_count
            );
        };
        for (r, m) in &self.per_regime {
            row(&r.to_string(), m);
        }
        row(
            "all",
            &RegimeMetrics {
                mse: self.mse,
                mre: self.mre,
                aurec: self.aurec,
                sample_count: self.sample_count,
            },
        );
        let _ = writeln!(s, "aurec bound: {}", self.aurec_bound);
        s
    }
}

/// Percentage change of `value` relative to `reference`.
pub fn improvement(value: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::invalid("improvement relative to a zero reference"));
    }
    Ok(100.0 * (value - reference) / reference)
}

/// Improvement of every entry's AU-REC over the entry named `reference`.
pub fn improvement_table(
    aurec_by_model: &BTreeMap<String, f64>,
    reference: &str,
) -> Result<BTreeMap<String, f64>> {
    let base = *aurec_by_model
        .get(reference)
        .ok_or_else(|| Error::invalid(format!("reference model {reference} not in table")))?;
    aurec_by_model
        .iter()
        .map(|(name, &a)| Ok((name.clone(), improvement(a, base)?)))
        .collect()
}
