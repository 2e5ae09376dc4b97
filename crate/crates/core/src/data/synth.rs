//! Deterministic synthetic particle generator with closed-form labels.
//!
//! Geometry and regimes come from one ChaCha stream and the drag noise from a
//! second stream of the same seed, so the noise level never perturbs the
//! noiseless part of a dataset.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FlowRegime, ParticleSample, FIELD_POINTS, NEIGHBORS};
use crate::error::{Error, Result};

const COORD_LIMIT: f64 = 2.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Standard deviation of the additive drag noise.
    Absolute(f64),
    /// Multiple of the population std of the noiseless drag.
    RelativeToDragStd(f64),
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Absolute(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SyntheticSpec {
    pub fn generate(&self) -> Result<Vec<ParticleSample>> {
        let sigma = match self.noise {
            NoiseSpec::Absolute(s) => s,
            NoiseSpec::RelativeToDragStd(k) => {
                let clean = synth_generate(self.n, self.seed, 0.0)?;
                let n = clean.len() as f64;
                let mean = clean.iter().map(|s| s.drag_x).sum::<f64>() / n;
                let var = clean.iter().map(|s| (s.drag_x - mean).powi(2)).sum::<f64>() / n;
                k * var.sqrt()
            }
        };
        synth_generate(self.n, self.seed, sigma)
    }
}

fn field_position(k: usize) -> f64 {
    (k as f64 + 0.5) / FIELD_POINTS as f64
}

pub fn synth_generate(n: usize, seed: u64, noise_sigma: f64) -> Result<Vec<ParticleSample>> {
    if n == 0 {
        return Err(Error::invalid("synthetic dataset needs n >= 1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!(
            "noise_sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let mut geometry = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let regime = FlowRegime::from_index(geometry.random_range(0..16)).expect("index in range");
        let mut neighbors: Vec<[f64; 3]> = (0..NEIGHBORS)
            .map(|_| {
                [
                    geometry.random_range(-COORD_LIMIT..=COORD_LIMIT),
                    geometry.random_range(-COORD_LIMIT..=COORD_LIMIT),
                    geometry.random_range(-COORD_LIMIT..=COORD_LIMIT),
                ]
            })
            .collect();
        let dist = |p: &[f64; 3]| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        neighbors.sort_by(|a, b| dist(a).total_cmp(&dist(b)));

        let re = regime.reynolds();
        let phi = regime.solid_fraction();
        let weights: Vec<f64> = neighbors.iter().map(|p| (-dist(p)).exp()).collect();
        let crowding: f64 = weights.iter().sum();

        let mut pressure = [0.0; FIELD_POINTS];
        let mut velocity = [0.0; FIELD_POINTS];
        for k in 0..FIELD_POINTS {
            let s = field_position(k);
            pressure[k] = (1.0 + phi) * re.sqrt() / 10.0 * (1.0 - 2.0 * s) * (1.0 + crowding);
            velocity[k] = (1.0 - phi) * re.sqrt() / 5.0 * (PI * s).sin() / (1.0 + crowding);
        }
        let fp_x = 10.0
            * (0..FIELD_POINTS)
                .map(|k| pressure[k] * (1.0 - 2.0 * field_position(k)))
                .sum::<f64>()
            / FIELD_POINTS as f64;
        let fs_x = 3.0 * velocity.iter().sum::<f64>() / FIELD_POINTS as f64;
        let lateral = |axis: usize| -> f64 {
            neighbors
                .iter()
                .zip(&weights)
                .map(|(p, w)| p[axis] * w)
                .sum()
        };
        let (wy, wz) = (lateral(1), lateral(2));

        let mut sample = ParticleSample {
            neighbor_x: [0.0; NEIGHBORS],
            neighbor_y: [0.0; NEIGHBORS],
            neighbor_z: [0.0; NEIGHBORS],
            reynolds: re,
            solid_fraction: phi,
            drag_x: 0.0,
            pressure_field: pressure,
            velocity_field: velocity,
            pressure_component: [fp_x, 0.1 * wy, 0.1 * wz],
            shear_component: [fs_x, 0.05 * wy, 0.05 * wz],
        };
        for (j, p) in neighbors.iter().enumerate() {
            sample.neighbor_x[j] = p[0];
            sample.neighbor_y[j] = p[1];
            sample.neighbor_z[j] = p[2];
        }
        let eps = if noise_sigma > 0.0 {
            noise.sample(&mut noise_rng)
        } else {
            0.0
        };
        sample.drag_x = fp_x + fs_x + eps;
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_drag_is_component_sum() {
        for s in synth_generate(200, 4, 0.0).unwrap() {
            assert_eq!(s.drag_x, s.pressure_component[0] + s.shear_component[0]);
        }
    }

    #[test]
    fn neighbors_sorted_and_bounded() {
        for s in synth_generate(50, 1, 0.0).unwrap() {
            let d: Vec<f64> = (0..NEIGHBORS)
                .map(|j| {
                    (s.neighbor_x[j].powi(2) + s.neighbor_y[j].powi(2) + s.neighbor_z[j].powi(2))
                        .sqrt()
                })
                .collect();
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
            assert!(s
                .neighbor_x
                .iter()
                .chain(&s.neighbor_y)
                .chain(&s.neighbor_z)
                .all(|v| v.abs() <= COORD_LIMIT));
        }
    }

    #[test]
    fn noise_does_not_move_geometry() {
        let a = synth_generate(30, 8, 0.0).unwrap();
        let b = synth_generate(30, 8, 0.7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.features(), y.features());
            assert_eq!(x.pressure_field, y.pressure_field);
            assert_ne!(x.drag_x, y.drag_x);
        }
    }

    #[test]
    fn invalid_arguments() {
        assert!(synth_generate(0, 0, 0.0).is_err());
        assert!(synth_generate(5, 0, -1.0).is_err());
    }
}
