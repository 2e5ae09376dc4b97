use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{group_by_regime, FlowRegime};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub stratify_by_regime: bool,
}

fn default_true() -> bool {
    true
}

/// Disjoint, exhaustive partition of row indices, each side sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle-then-cut.
///
/// Unstratified: `floor(fraction·n)` training rows. Stratified: each regime
/// independently keeps `floor(fraction·n_g + 0.5)` rows, clamped so that both
/// sides receive at least one row of every regime.
pub fn split(regimes: &[FlowRegime], spec: &SplitSpec) -> Result<Split> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {f}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if spec.stratify_by_regime {
        for (regime, mut rows) in group_by_regime(regimes) {
            let n = rows.len();
            if n < 2 {
                return Err(Error::invalid(format!(
                    "regime {regime} has {n} sample(s); stratified splitting needs at least 2"
                )));
            }
            rows.shuffle(&mut rng);
            let k = ((f * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
            train.extend_from_slice(&rows[..k]);
            test.extend_from_slice(&rows[k..]);
        }
    } else {
        let n = regimes.len();
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        // The epsilon absorbs products like 0.29·100 = 28.999999999999996.
        let k = ((f * n as f64 + 1e-9).floor() as usize).min(n);
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regimes(n: usize) -> Vec<FlowRegime> {
        (0..n)
            .map(|i| FlowRegime::from_index(i % 16).unwrap())
            .collect()
    }

    #[test]
    fn unstratified_full_dataset_size() {
        let s = split(
            &regimes(5824),
            &SplitSpec {
                train_fraction: 0.55,
                seed: 1,
                stratify_by_regime: false,
            },
        )
        .unwrap();
        assert_eq!(s.train.len(), 3203);
        assert_eq!(s.test.len(), 2621);
    }

    #[test]
    fn two_sample_regime_splits_one_one() {
        let r = vec![FlowRegime::from_index(3).unwrap(); 2];
        let s = split(
            &r,
            &SplitSpec {
                train_fraction: 0.5,
                seed: 9,
                stratify_by_regime: true,
            },
        )
        .unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
    }

    #[test]
    fn singleton_regime_rejected_when_stratified() {
        let mut r = vec![FlowRegime::from_index(0).unwrap(); 4];
        r.push(FlowRegime::from_index(1).unwrap());
        assert!(split(
            &r,
            &SplitSpec {
                train_fraction: 0.5,
                seed: 0,
                stratify_by_regime: true
            }
        )
        .is_err());
    }

    #[test]
    fn fraction_bounds() {
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(split(
                &regimes(10),
                &SplitSpec {
                    train_fraction: f,
                    seed: 0,
                    stratify_by_regime: false
                }
            )
            .is_err());
        }
    }
}
