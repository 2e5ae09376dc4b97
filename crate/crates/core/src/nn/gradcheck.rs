//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use super::params::ParameterStore;
use super::tensor::Tensor;

/// Result of one scalar evaluation used by the checker.
///
/// `kink_signature` summarizes the on/off pattern of every piecewise-linear
/// unit. When a perturbation changes it, the central difference straddles a
/// kink and that coordinate is excluded from the comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub loss: f64,
    pub kink_signature: u64,
}

impl Probe {
    pub fn smooth(loss: f64) -> Self {
        Self {
            loss,
            kink_signature: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Relative error with the `max(|a|, |n|, 1e-6)` denominator. Below the floor it
/// is an absolute check: a central difference of an O(1) loss at epsilon 1e-4
/// carries about 1e-12 of roundoff.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Hashes the sign pattern (`> 0`) of the given pre-activations.
pub fn kink_signature<'a>(pre_activations: impl IntoIterator<Item = &'a Tensor>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for t in pre_activations {
        for &v in t.values() {
            h ^= u64::from(v > 0.0) + 1;
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

/// Compares the analytic gradients already stored in `params` against central
/// differences of `forward`, over every scalar parameter.
pub fn grad_check<F>(forward: F, params: &mut ParameterStore, epsilon: f64) -> GradCheckReport
where
    F: FnMut(&ParameterStore) -> Probe,
{
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, e)| (0..e.value.len()).map(move |i| (p, i)))
        .collect();
    check_coords(forward, params, epsilon, &coords)
}

/// Like [`grad_check`] but over `count` coordinates sampled without replacement.
pub fn grad_check_sampled<F, R>(
    forward: F,
    params: &mut ParameterStore,
    epsilon: f64,
    count: usize,
    rng: &mut R,
) -> GradCheckReport
where
    F: FnMut(&ParameterStore) -> Probe,
    R: Rng,
{
    let all: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, e)| (0..e.value.len()).map(move |i| (p, i)))
        .collect();
    let picked = sample(rng, all.len(), count.min(all.len()));
    let mut coords: Vec<(usize, usize)> = picked.into_iter().map(|k| all[k]).collect();
    coords.sort_unstable();
    check_coords(forward, params, epsilon, &coords)
}

fn check_coords<F>(
    mut forward: F,
    params: &mut ParameterStore,
    epsilon: f64,
    coords: &[(usize, usize)],
) -> GradCheckReport
where
    F: FnMut(&ParameterStore) -> Probe,
{
    let base = forward(params);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for &(p, i) in coords {
        let id = super::params::ParamId(p);
        let original = params.get(id).value.values()[i];
        let analytic = params.get(id).grad.values()[i];

        params.get_mut(id).value.values_mut()[i] = original + epsilon;
        let plus = forward(params);
        params.get_mut(id).value.values_mut()[i] = original - epsilon;
        let minus = forward(params);
        params.get_mut(id).value.values_mut()[i] = original;

        if plus.kink_signature != base.kink_signature || minus.kink_signature != base.kink_signature
        {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * epsilon);
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if err > report.max_rel_error || err.is_nan() {
            report.max_rel_error = err;
            report.worst = Some((params.get(id).name.clone(), i));
            report.worst_values = Some((analytic, numeric));
        }
    }
    report
}
