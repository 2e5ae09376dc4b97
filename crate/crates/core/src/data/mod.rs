//! Particle dataset schema, ingestion, standardization, splitting and the
//! synthetic oracle generator.

mod csv_io;
mod split;
mod standardize;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to};
pub use split::{split, Split, SplitSpec};
pub use standardize::{
    apply_standardization, fit_standardization, Direction, StandardizationStats,
};
pub use synth::{synth_generate, NoiseSpec, SyntheticSpec};

pub const NEIGHBORS: usize = 15;
pub const FIELD_POINTS: usize = 10;
pub const COMPONENTS: usize = 3;
pub const FEATURE_DIM: usize = 3 * NEIGHBORS + 2;
pub const LABEL_DIM: usize = 1 + 2 * FIELD_POINTS + 2 * COMPONENTS;

pub const REYNOLDS_VALUES: [f64; 4] = [10.0, 50.0, 100.0, 200.0];
pub const SOLID_FRACTION_VALUES: [f64; 4] = [0.1, 0.2, 0.3, 0.35];

/// Column index of `Re` inside the feature vector.
pub const REYNOLDS_COLUMN: usize = 3 * NEIGHBORS;
pub const SOLID_FRACTION_COLUMN: usize = 3 * NEIGHBORS + 1;

/// Label block layout inside the 27 label columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelBlock {
    Drag,
    PressureField,
    VelocityField,
    PressureComponent,
    ShearComponent,
}

impl LabelBlock {
    pub const ALL: [LabelBlock; 5] = [
        LabelBlock::Drag,
        LabelBlock::PressureField,
        LabelBlock::VelocityField,
        LabelBlock::PressureComponent,
        LabelBlock::ShearComponent,
    ];

    pub fn columns(self) -> std::ops::Range<usize> {
        match self {
            LabelBlock::Drag => 0..1,
            LabelBlock::PressureField => 1..11,
            LabelBlock::VelocityField => 11..21,
            LabelBlock::PressureComponent => 21..24,
            LabelBlock::ShearComponent => 24..27,
        }
    }

    pub fn width(self) -> usize {
        self.columns().len()
    }
}

/// Feature column names in file order: `x1..x15, y1..y15, z1..z15, Re, phi`.
pub fn feature_columns() -> &'static [String] {
    static COLS: OnceLock<Vec<String>> = OnceLock::new();
    COLS.get_or_init(|| {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        for axis in ["x", "y", "z"] {
            v.extend((1..=NEIGHBORS).map(|i| format!("{axis}{i}")));
        }
        v.push("Re".into());
        v.push("phi".into());
        v
    })
}

/// Label column names in file order: `Fx, p1..p10, v1..v10, FPx..FPz, FSx..FSz`.
pub fn label_columns() -> &'static [String] {
    static COLS: OnceLock<Vec<String>> = OnceLock::new();
    COLS.get_or_init(|| {
        let mut v = Vec::with_capacity(LABEL_DIM);
        v.push("Fx".into());
        v.extend((1..=FIELD_POINTS).map(|i| format!("p{i}")));
        v.extend((1..=FIELD_POINTS).map(|i| format!("v{i}")));
        for c in ["FP", "FS"] {
            v.extend(["x", "y", "z"].iter().map(|a| format!("{c}{a}")));
        }
        v
    })
}

/// One (Re, φ) experimental setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowRegime {
    re: u8,
    phi: u8,
}

impl FlowRegime {
    /// Exact match against the four Reynolds numbers and four solid fractions.
    pub fn from_values(reynolds: f64, solid_fraction: f64) -> Result<Self> {
        let re = REYNOLDS_VALUES.iter().position(|&v| v == reynolds);
        let phi = SOLID_FRACTION_VALUES
            .iter()
            .position(|&v| v == solid_fraction);
        match (re, phi) {
            (Some(re), Some(phi)) => Ok(Self {
                re: re as u8,
                phi: phi as u8,
            }),
            _ => Err(Error::UnknownRegime {
                reynolds,
                solid_fraction,
            }),
        }
    }

    pub fn all() -> impl Iterator<Item = FlowRegime> {
        (0..4u8).flat_map(|re| (0..4u8).map(move |phi| FlowRegime { re, phi }))
    }

    /// Position in `0..16`, Reynolds-major.
    pub fn index(self) -> usize {
        self.re as usize * 4 + self.phi as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < 16).then(|| FlowRegime {
            re: (i / 4) as u8,
            phi: (i % 4) as u8,
        })
    }

    pub fn reynolds(self) -> f64 {
        REYNOLDS_VALUES[self.re as usize]
    }

    pub fn solid_fraction(self) -> f64 {
        SOLID_FRACTION_VALUES[self.phi as usize]
    }
}

impl fmt::Display for FlowRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Re={},phi={}", self.reynolds(), self.solid_fraction())
    }
}

impl std::str::FromStr for FlowRegime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse flow regime `{s}`"));
        let (re, phi) = s.split_once(',').ok_or_else(bad)?;
        let re: f64 = re
            .strip_prefix("Re=")
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        let phi: f64 = phi
            .strip_prefix("phi=")
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        FlowRegime::from_values(re, phi)
    }
}

impl Serialize for FlowRegime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FlowRegime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSample {
    pub neighbor_x: [f64; NEIGHBORS],
    pub neighbor_y: [f64; NEIGHBORS],
    pub neighbor_z: [f64; NEIGHBORS],
    pub reynolds: f64,
    pub solid_fraction: f64,
    pub drag_x: f64,
    pub pressure_field: [f64; FIELD_POINTS],
    pub velocity_field: [f64; FIELD_POINTS],
    pub pressure_component: [f64; COMPONENTS],
    pub shear_component: [f64; COMPONENTS],
}

impl ParticleSample {
    pub fn regime(&self) -> Result<FlowRegime> {
        FlowRegime::from_values(self.reynolds, self.solid_fraction)
    }

    pub fn features(&self) -> [f64; FEATURE_DIM] {
        let mut f = [0.0; FEATURE_DIM];
        f[..NEIGHBORS].copy_from_slice(&self.neighbor_x);
        f[NEIGHBORS..2 * NEIGHBORS].copy_from_slice(&self.neighbor_y);
        f[2 * NEIGHBORS..3 * NEIGHBORS].copy_from_slice(&self.neighbor_z);
        f[REYNOLDS_COLUMN] = self.reynolds;
        f[SOLID_FRACTION_COLUMN] = self.solid_fraction;
        f
    }

    pub fn labels(&self) -> [f64; LABEL_DIM] {
        let mut l = [0.0; LABEL_DIM];
        l[0] = self.drag_x;
        l[LabelBlock::PressureField.columns()].copy_from_slice(&self.pressure_field);
        l[LabelBlock::VelocityField.columns()].copy_from_slice(&self.velocity_field);
        l[LabelBlock::PressureComponent.columns()].copy_from_slice(&self.pressure_component);
        l[LabelBlock::ShearComponent.columns()].copy_from_slice(&self.shear_component);
        l
    }

    pub fn from_columns(features: &[f64], labels: &[f64]) -> Result<Self> {
        if features.len() != FEATURE_DIM || labels.len() != LABEL_DIM {
            return Err(Error::shape(
                "sample columns",
                &[features.len(), labels.len()],
                &[FEATURE_DIM, LABEL_DIM],
            ));
        }
        let arr = |s: &[f64]| -> [f64; NEIGHBORS] { s.try_into().expect("checked length") };
        let block = |b: LabelBlock| &labels[b.columns()];
        Ok(Self {
            neighbor_x: arr(&features[..NEIGHBORS]),
            neighbor_y: arr(&features[NEIGHBORS..2 * NEIGHBORS]),
            neighbor_z: arr(&features[2 * NEIGHBORS..3 * NEIGHBORS]),
            reynolds: features[REYNOLDS_COLUMN],
            solid_fraction: features[SOLID_FRACTION_COLUMN],
            drag_x: labels[0],
            pressure_field: block(LabelBlock::PressureField)
                .try_into()
                .expect("checked length"),
            velocity_field: block(LabelBlock::VelocityField)
                .try_into()
                .expect("checked length"),
            pressure_component: block(LabelBlock::PressureComponent)
                .try_into()
                .expect("checked length"),
            shear_component: block(LabelBlock::ShearComponent)
                .try_into()
                .expect("checked length"),
        })
    }
}

/// Which partition a table or fitted statistic came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    All,
    Train,
    Validation,
    Test,
}

/// Origin tag carried by tables and everything fitted from them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub role: SplitRole,
    pub fingerprint: u64,
}

impl Provenance {
    /// Fails unless `self` was fitted on a training partition distinct from `evaluated`.
    pub fn ensure_fit_for(&self, evaluated: &Provenance) -> Result<()> {
        if self.role != SplitRole::Train {
            return Err(Error::Provenance(format!(
                "statistics fitted on {:?} rows, not training rows",
                self.role
            )));
        }
        if evaluated.role != SplitRole::Train && self.fingerprint == evaluated.fingerprint {
            return Err(Error::Provenance(
                "statistics were fitted on the evaluated rows".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn fingerprint(seed: u64, items: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for x in items {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Column-major view of a dataset: feature and label matrices plus regime keys.
///
/// Regime keys are captured from raw values before any standardization and
/// stay attached to their rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub features: Tensor,
    pub labels: Tensor,
    pub regimes: Vec<FlowRegime>,
    pub provenance: Provenance,
}

impl Table {
    pub fn from_samples(samples: &[ParticleSample]) -> Result<Self> {
        let mut features = Vec::with_capacity(samples.len() * FEATURE_DIM);
        let mut labels = Vec::with_capacity(samples.len() * LABEL_DIM);
        let mut regimes = Vec::with_capacity(samples.len());
        for s in samples {
            regimes.push(s.regime()?);
            features.extend_from_slice(&s.features());
            labels.extend_from_slice(&s.labels());
        }
        let fp = fingerprint(
            samples.len() as u64,
            features.iter().chain(&labels).map(|v| v.to_bits()),
        );
        Ok(Self {
            features: Tensor::new(vec![samples.len(), FEATURE_DIM], features)?,
            labels: Tensor::new(vec![samples.len(), LABEL_DIM], labels)?,
            regimes,
            provenance: Provenance {
                role: SplitRole::All,
                fingerprint: fp,
            },
        })
    }

    pub fn to_samples(&self) -> Result<Vec<ParticleSample>> {
        (0..self.len())
            .map(|i| ParticleSample::from_columns(self.features.row(i), self.labels.row(i)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn subset(&self, indices: &[usize], role: SplitRole) -> Result<Table> {
        Ok(Table {
            features: self.features.select_rows(indices)?,
            labels: self.labels.select_rows(indices)?,
            regimes: indices.iter().map(|&i| self.regimes[i]).collect(),
            provenance: Provenance {
                role,
                fingerprint: fingerprint(
                    self.provenance.fingerprint,
                    indices.iter().map(|&i| i as u64),
                ),
            },
        })
    }

    /// Label block `b` for the given rows as a `rows × width` matrix.
    pub fn label_block(&self, block: LabelBlock, rows: &[usize]) -> Tensor {
        let cols = block.columns();
        let mut v = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            v.extend_from_slice(&self.labels.row(r)[cols.clone()]);
        }
        Tensor::new(vec![rows.len(), block.width()], v).expect("consistent block size")
    }

    pub fn column(&self, label_col: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |r| self.labels.row(r)[label_col])
    }
}

/// Indices of each regime's rows, in ascending order.
pub fn group_by_regime(regimes: &[FlowRegime]) -> BTreeMap<FlowRegime, Vec<usize>> {
    let mut groups: BTreeMap<FlowRegime, Vec<usize>> = BTreeMap::new();
    for (i, &r) in regimes.iter().enumerate() {
        groups.entry(r).or_default().push(i);
    }
    groups
}
