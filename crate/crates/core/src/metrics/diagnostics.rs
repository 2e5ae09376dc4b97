use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{group_by_regime, FlowRegime};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DEFAULT_BINS: usize = 64;

/// Shear magnitudes below this are treated as zero and the sample skipped.
const SHEAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEntry {
    pub ratio: f64,
    pub samples: usize,
    pub excluded: usize,
}

/// Per-regime mean of `|F^P_x| / |F^S_x|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub per_regime: BTreeMap<FlowRegime, RatioEntry>,
    pub excluded: usize,
}

pub fn pressure_shear_ratio(
    pressure_x: &[f64],
    shear_x: &[f64],
    regimes: &[FlowRegime],
) -> Result<RatioReport> {
    if pressure_x.len() != shear_x.len() || pressure_x.len() != regimes.len() {
        return Err(Error::shape(
            "pressure, shear, regimes",
            &[pressure_x.len(), shear_x.len()],
            &[regimes.len()],
        ));
    }
    let mut per_regime = BTreeMap::new();
    let mut excluded = 0;
    for (regime, rows) in group_by_regime(regimes) {
        let mut sum = 0.0;
        let mut used = 0;
        for &i in &rows {
            if shear_x[i].abs() < SHEAR_FLOOR {
                continue;
            }
            sum += pressure_x[i].abs() / shear_x[i].abs();
            used += 1;
        }
        let skipped = rows.len() - used;
        excluded += skipped;
        let ratio = if used == 0 {
            f64::NAN
        } else {
            sum / used as f64
        };
        per_regime.insert(
            regime,
            RatioEntry {
                ratio,
                samples: used,
                excluded: skipped,
            },
        );
    }
    Ok(RatioReport {
        per_regime,
        excluded,
    })
}

/// `(min, max)` of all finite values; a degenerate range is widened by 0.5 on each side.
pub fn value_range(values: &Tensor) -> Result<(f64, f64)> {
    let (lo, hi) = values
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(
            "value range of an empty or non-finite field",
        ));
    }
    Ok(if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    })
}

/// Normalized histograms of field values, one per regime, on shared bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHistogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    pub per_regime: BTreeMap<FlowRegime, Vec<f64>>,
    /// Values outside `[lo, hi]` that were clamped into an edge bin.
    pub clamped: usize,
}

pub fn field_histogram(
    field: &Tensor,
    regimes: &[FlowRegime],
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<FieldHistogram> {
    let (rows, _) = field.expect_rank2("field")?;
    if rows != regimes.len() {
        return Err(Error::shape(
            "field rows vs regimes",
            &[rows],
            &[regimes.len()],
        ));
    }
    if bins < 2 || !(lo < hi) {
        return Err(Error::invalid(format!(
            "histogram needs bins >= 2 and lo < hi, got {bins} bins on [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / bins as f64;
    let mut clamped = 0;
    let mut per_regime = BTreeMap::new();
    for (regime, idx) in group_by_regime(regimes) {
        let mut counts = vec![0.0; bins];
        let mut total = 0.0;
        for &i in &idx {
            for &v in field.row(i) {
                if v < lo || v > hi {
                    clamped += 1;
                }
                let b = ((v - lo) / width).floor();
                let b = if b.is_nan() {
                    0
                } else {
                    (b.max(0.0) as usize).min(bins - 1)
                };
                counts[b] += 1.0;
                total += 1.0;
            }
        }
        for c in &mut counts {
            *c /= total;
        }
        per_regime.insert(regime, counts);
    }
    Ok(FieldHistogram {
        lo,
        hi,
        bins,
        per_regime,
        clamped,
    })
}

impl FieldHistogram {
    /// Long-format rows `<prefix>,reynolds,solid_fraction,bin,bin_lo,bin_hi,density`.
    pub fn write_csv<W: Write>(&self, w: &mut W, prefix: &str) -> Result<()> {
        let width = (self.hi - self.lo) / self.bins as f64;
        for (regime, counts) in &self.per_regime {
            let (re, phi) = (regime.reynolds(), regime.solid_fraction());
            for (b, c) in counts.iter().enumerate() {
                let a = self.lo + b as f64 * width;
                writeln!(w, "{prefix},{re},{phi},{b},{a:?},{:?},{c:?}", a + width)?;
            }
        }
        Ok(())
    }
}

/// `|mean of field over a regime's rows and points − target[regime]|` per regime.
pub fn field_mean_gaps(
    field: &Tensor,
    regimes: &[FlowRegime],
    target: impl Fn(FlowRegime) -> Result<f64>,
) -> Result<BTreeMap<FlowRegime, f64>> {
    let (rows, width) = field.expect_rank2("field")?;
    if rows != regimes.len() {
        return Err(Error::shape(
            "field rows vs regimes",
            &[rows],
            &[regimes.len()],
        ));
    }
    group_by_regime(regimes)
        .into_iter()
        .map(|(regime, idx)| {
            let mean = idx
                .iter()
                .map(|&i| field.row(i).iter().sum::<f64>())
                .sum::<f64>()
                / (idx.len() * width) as f64;
            Ok((regime, (mean - target(regime)?).abs()))
        })
        .collect()
}
