use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabelBlock;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Phydnn,
    PhydnnFxOnly,
    Dnn,
    DnnPlusPres,
    DnnPlusVel,
    DnnMtPres,
    DnnMtVel,
    MeanBaseline,
    LinearRegression,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Phydnn,
        ModelKind::PhydnnFxOnly,
        ModelKind::Dnn,
        ModelKind::DnnPlusPres,
        ModelKind::DnnPlusVel,
        ModelKind::DnnMtPres,
        ModelKind::DnnMtVel,
        ModelKind::MeanBaseline,
        ModelKind::LinearRegression,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Phydnn => "phydnn",
            ModelKind::PhydnnFxOnly => "phydnn_fx_only",
            ModelKind::Dnn => "dnn",
            ModelKind::DnnPlusPres => "dnn_plus_pres",
            ModelKind::DnnPlusVel => "dnn_plus_vel",
            ModelKind::DnnMtPres => "dnn_mt_pres",
            ModelKind::DnnMtVel => "dnn_mt_vel",
            ModelKind::MeanBaseline => "mean_baseline",
            ModelKind::LinearRegression => "linear_regression",
        }
    }

    /// Trained by gradient descent (as opposed to a closed-form fit).
    pub fn is_neural(self) -> bool {
        !matches!(self, ModelKind::MeanBaseline | ModelKind::LinearRegression)
    }

    pub fn is_phydnn(self) -> bool {
        matches!(self, ModelKind::Phydnn | ModelKind::PhydnnFxOnly)
    }

    /// Output blocks this kind emits besides drag.
    pub fn emits(self, block: LabelBlock) -> bool {
        use LabelBlock::*;
        match block {
            Drag => true,
            PressureField => matches!(
                self,
                ModelKind::Phydnn
                    | ModelKind::PhydnnFxOnly
                    | ModelKind::DnnPlusPres
                    | ModelKind::DnnMtPres
            ),
            VelocityField => matches!(
                self,
                ModelKind::Phydnn
                    | ModelKind::PhydnnFxOnly
                    | ModelKind::DnnPlusVel
                    | ModelKind::DnnMtVel
            ),
            PressureComponent | ShearComponent => self.is_phydnn(),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::UnknownModelKind(s.to_string()))
    }
}
