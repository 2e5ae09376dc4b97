use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{load_csv, NoiseSpec, ParticleSample, SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::DEFAULT_AUREC_BOUND;
use crate::models::{ArchitectureConfig, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec {
            n: 5824,
            seed: 0,
            noise: NoiseSpec::Absolute(0.0),
        })
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Vec<ParticleSample>> {
        match self {
            DataSource::Csv(path) => load_csv(path),
            DataSource::Synthetic(spec) => spec.generate(),
        }
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub loss_weights: LossWeights,
    /// `None` enables the aggregate loss for the physics-guided kinds only.
    pub use_phy: Option<bool>,
    pub phy_weight: f64,
    pub train_fraction: f64,
    pub stratify_by_regime: bool,
    pub seed: u64,
    pub data: DataSource,
    pub aurec_bound: f64,
    /// Record the full-training-set loss after every epoch.
    pub track_train_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Phydnn,
            epochs: 500,
            batch_size: 100,
            hidden_width: 128,
            learning_rate: 1e-3,
            loss_weights: LossWeights::default(),
            use_phy: None,
            phy_weight: 1.0,
            train_fraction: 0.55,
            stratify_by_regime: true,
            seed: 0,
            data: DataSource::default(),
            aurec_bound: DEFAULT_AUREC_BOUND,
            track_train_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.phy_weight >= 0.0 && self.phy_weight.is_finite()) {
            return Err(Error::invalid(format!(
                "phy_weight must be non-negative, got {}",
                self.phy_weight
            )));
        }
        if !(self.aurec_bound > 0.0 && self.aurec_bound.is_finite()) {
            return Err(Error::invalid(format!(
                "aurec_bound must be positive, got {}",
                self.aurec_bound
            )));
        }
        if self.use_phy() && !matches!(self.model, ModelKind::Phydnn | ModelKind::PhydnnFxOnly) {
            return Err(Error::invalid(format!(
                "use_phy needs pressure and velocity heads; {} has none",
                self.model
            )));
        }
        self.loss_weights.validate()?;
        self.architecture().validate()
    }

    pub fn use_phy(&self) -> bool {
        self.use_phy.unwrap_or(self.model.is_phydnn())
    }

    pub fn architecture(&self) -> ArchitectureConfig {
        ArchitectureConfig {
            hidden_width: self.hidden_width,
            seed: self.seed,
            ..ArchitectureConfig::default()
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratify_by_regime: self.stratify_by_regime,
        }
    }
}

/// Grid of candidate `(lambda_P, lambda_V)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGrid {
    pub lambda_p: Vec<f64>,
    pub lambda_v: Vec<f64>,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        let values = vec![1e-1, 1e-2, 1e-3, 1e-4];
        Self {
            lambda_p: values.clone(),
            lambda_v: values,
        }
    }
}

impl LambdaGrid {
    /// All pairs in ascending lexicographic order.
    pub fn cells(&self) -> Result<Vec<(f64, f64)>> {
        if self.lambda_p.is_empty() || self.lambda_v.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (ps, vs) = (sorted(&self.lambda_p), sorted(&self.lambda_v));
        if ps.iter().chain(&vs).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::invalid(
                "lambda grid values must be finite and non-negative",
            ));
        }
        Ok(ps
            .iter()
            .flat_map(|&p| vs.iter().map(move |&v| (p, v)))
            .collect())
    }
}

/// How λ is chosen for each sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Use the base config's weights.
    Static,
    /// Grid-search λ on a validation carve-out of each cell's training split.
    Gridsearch,
}

impl LambdaMode {
    pub fn tag(self) -> &'static str {
        match self {
            LambdaMode::Static => "static",
            LambdaMode::Gridsearch => "gridsearch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub train_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Empty means the base config's model only.
    pub models: Vec<ModelKind>,
    pub lambda_grid: LambdaGrid,
    pub lambda_modes: Vec<LambdaMode>,
    pub validation_fraction: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            train_fractions: vec![0.35, 0.45, 0.55, 0.65, 0.75, 0.85],
            seeds: vec![0],
            models: Vec::new(),
            lambda_grid: LambdaGrid::default(),
            lambda_modes: vec![LambdaMode::Static],
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
        }
    }
}

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_fractions.is_empty() || self.seeds.is_empty() || self.lambda_modes.is_empty()
        {
            return Err(Error::invalid(
                "sweep needs at least one fraction, seed and lambda mode",
            ));
        }
        if self.train_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::invalid("sweep fractions must lie in (0, 1)"));
        }
        if self.train_fractions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sweep fractions must be strictly ascending"));
        }
        check_validation_fraction(self.validation_fraction)
    }
}

pub(crate) fn check_validation_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::invalid(format!(
            "validation_fraction must lie in (0, 1), got {f}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let c = TrainConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), c);
        let partial: TrainConfig = serde_json::from_str(r#"{"model":"dnn","epochs":3}"#).unwrap();
        assert_eq!(partial.model, ModelKind::Dnn);
        assert_eq!(partial.batch_size, 100);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch":3}"#).is_err());
    }

    #[test]
    fn phy_flag_defaults_per_kind() {
        let mut c = TrainConfig::default();
        assert!(c.use_phy());
        c.model = ModelKind::Dnn;
        assert!(!c.use_phy());
        c.use_phy = Some(true);
        assert!(c.validate().is_err());
    }

    #[test]
    fn grid_cells_are_sorted() {
        let cells = LambdaGrid::default().cells().unwrap();
        assert_eq!(cells.len(), 16);
        assert_eq!(cells[0], (1e-4, 1e-4));
        assert_eq!(cells[1], (1e-4, 1e-3));
        assert!(LambdaGrid {
            lambda_p: vec![],
            lambda_v: vec![1.0]
        }
        .cells()
        .is_err());
    }

    #[test]
    fn sweep_validation() {
        let mut s = SweepSpec::default();
        assert!(s.validate().is_ok());
        s.train_fractions = vec![0.5, 0.4];
        assert!(s.validate().is_err());
    }
}
