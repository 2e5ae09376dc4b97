use std::io::Write;

use crate::error::{Error, Result};

fn check_bound(bound: f64) -> Result<()> {
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(Error::invalid(format!(
            "AU-REC bound must be positive, got {bound}"
        )));
    }
    Ok(())
}

fn sorted(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::invalid("AU-REC of an empty error list"));
    }
    if let Some(e) = errors.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::invalid(format!(
            "relative errors must be non-negative, got {e}"
        )));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(s)
}

/// Normalized area under the cumulative relative-error curve on `[0, bound]`.
///
/// The empirical CDF is a step function, so the integral is summed exactly
/// segment by segment between consecutive sorted errors.
pub fn aurec(errors: &[f64], bound: f64) -> Result<f64> {
    check_bound(bound)?;
    let s = sorted(errors)?;
    let n = s.len() as f64;
    let mut area = 0.0;
    let mut i = 0;
    while i < s.len() && s[i] < bound {
        let mut j = i;
        while j < s.len() && s[j] == s[i] {
            j += 1;
        }
        let next = if j < s.len() { s[j].min(bound) } else { bound };
        area += (j as f64 / n) * (next - s[i]);
        i = j;
    }
    Ok((area / bound).clamp(0.0, 1.0))
}

/// Step points of the empirical CDF of relative errors, truncated at `bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelErrorCurve {
    pub thresholds: Vec<f64>,
    pub cdf: Vec<f64>,
    pub bound: f64,
}

impl RelErrorCurve {
    pub fn new(errors: &[f64], bound: f64) -> Result<Self> {
        check_bound(bound)?;
        let s = sorted(errors)?;
        let n = s.len() as f64;
        let below = |t: f64| s.partition_point(|&e| e <= t) as f64 / n;
        let mut thresholds = vec![0.0];
        thresholds.extend(s.iter().copied().filter(|&e| e > 0.0 && e < bound));
        thresholds.push(bound);
        thresholds.dedup();
        let cdf = thresholds.iter().map(|&t| below(t)).collect();
        Ok(Self {
            thresholds,
            cdf,
            bound,
        })
    }

    /// Writes `threshold,cdf` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "threshold,cdf")?;
        for (t, c) in self.thresholds.iter().zip(&self.cdf) {
            writeln!(w, "{t:?},{c:?}")?;
        }
        Ok(())
    }
}
