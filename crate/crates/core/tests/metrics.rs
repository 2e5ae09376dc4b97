mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use phydnn::data::{synth_generate, FlowRegime, Provenance, SplitRole, SOLID_FRACTION_VALUES};
use phydnn::losses::{RegimeAggregates, RegimeMeans};
use phydnn::metrics::{
    aurec, compute_metrics, field_histogram, improvement_table, pressure_shear_ratio,
    relative_errors, value_range, RelErrorCurve,
};
use phydnn::nn::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn aggregates(mean_drag: impl Fn(FlowRegime) -> f64) -> RegimeAggregates {
    RegimeAggregates {
        entries: FlowRegime::all()
            .map(|r| {
                let m = RegimeMeans {
                    mean_pressure: 0.0,
                    mean_velocity: 0.0,
                    mean_drag: mean_drag(r),
                    sample_count: 1,
                };
                (r, m)
            })
            .collect(),
        provenance: Provenance {
            role: SplitRole::Train,
            fingerprint: 1,
        },
    }
}

/// Midpoint Riemann sum of the empirical CDF on `[0, bound]`.
fn riemann(errors: &[f64], bound: f64, points: usize) -> f64 {
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let mut below = 0;
    let mut acc = 0.0;
    for k in 0..points {
        let t = (k as f64 + 0.5) * bound / points as f64;
        while below < s.len() && s[below] <= t {
            below += 1;
        }
        acc += below as f64;
    }
    acc / (s.len() * points) as f64
}

/// `∫₀ᵀ CDF = mean(max(0, T − r))`, normalized by `T`.
fn clipped_mean(errors: &[f64], bound: f64) -> f64 {
    errors.iter().map(|r| (bound - r).max(0.0)).sum::<f64>() / (errors.len() as f64 * bound)
}

#[test]
fn perfect_predictor() {
    let samples = synth_generate(200, 1, 0.0).unwrap();
    let truth: Vec<f64> = samples.iter().map(|s| s.drag_x).collect();
    let regimes: Vec<FlowRegime> = samples.iter().map(|s| s.regime().unwrap()).collect();
    let m = compute_metrics(&truth, &truth, &regimes, &aggregates(|_| 5.0), 1.0).unwrap();
    assert_eq!((m.mse, m.mre, m.aurec), (0.0, 0.0, 1.0));
    assert!(m.per_regime.values().all(|r| r.aurec == 1.0));
    assert_eq!(
        m.per_regime.values().map(|r| r.sample_count).sum::<usize>(),
        200
    );
}

#[test]
fn hand_evaluated_single_sample() {
    let r = FlowRegime::from_index(4).unwrap();
    let agg = aggregates(|_| 20.0);
    assert_eq!(
        relative_errors(&[12.0], &[10.0], &[r], &agg).unwrap(),
        vec![0.1]
    );
    let m = compute_metrics(&[12.0], &[10.0], &[r], &agg, 1.0).unwrap();
    assert_eq!(m.mse, 4.0);
    assert!((m.mre - 10.0).abs() < 1e-12);
    assert!((m.aurec - 0.9).abs() < 1e-15);
}

#[test]
fn non_positive_regime_mean_rejected() {
    let r = FlowRegime::from_index(0).unwrap();
    assert!(relative_errors(&[1.0], &[1.0], &[r], &aggregates(|_| 0.0)).is_err());
    assert!(relative_errors(&[1.0], &[1.0], &[r], &aggregates(|_| -2.0)).is_err());
}

#[test]
fn aurec_worked_values() {
    assert_eq!(aurec(&[0.0; 5], 1.0).unwrap(), 1.0);
    assert_eq!(aurec(&[1.5, 2.0, 7.0], 1.0).unwrap(), 0.0);
    assert!((aurec(&[0.0, 1.0], 2.0).unwrap() - 0.75).abs() < 1e-15);
    assert!(aurec(&[], 1.0).is_err());
    assert!(aurec(&[0.1], 0.0).is_err());
}

#[test]
fn aurec_matches_riemann_sum_and_clipped_mean() {
    let mut r = common::rng(42);
    for _ in 0..50 {
        let n = r.random_range(1..40);
        let bound = r.random_range(0.2..2.0);
        let errors: Vec<f64> = (0..n)
            .map(|_| {
                if r.random_bool(0.1) {
                    0.0
                } else {
                    r.random_range(0.0..1.5 * bound)
                }
            })
            .collect();
        let exact = aurec(&errors, bound).unwrap();
        assert!((exact - riemann(&errors, bound, 1_000_000)).abs() < 2e-6);
        assert!((exact - clipped_mean(&errors, bound)).abs() < 1e-12);
    }
}

#[test]
fn published_improvements_reproduce() {
    assert!(common::published_improvement_gap() <= 0.01 + 1e-9);
    let mut t = BTreeMap::new();
    t.insert("a".to_string(), 0.5);
    assert!(improvement_table(&t, "b").is_err());
    t.insert("b".to_string(), 0.0);
    assert!(improvement_table(&t, "b").is_err());
}

#[test]
fn relative_error_curve() {
    let errors = [0.0, 0.0, 0.2, 0.5, 0.5, 1.7];
    let c = RelErrorCurve::new(&errors, 1.0).unwrap();
    assert_eq!(c.thresholds, vec![0.0, 0.2, 0.5, 1.0]);
    assert_eq!(c.cdf, vec![2.0 / 6.0, 3.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0]);
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("threshold,cdf\n0.0,"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn ratio_hand_values() {
    let r = FlowRegime::from_index(7).unwrap();
    let q = FlowRegime::from_index(2).unwrap();
    let rep = pressure_shear_ratio(
        &[2.0, -4.0, 0.3, 5.0],
        &[1.0, 1.0, 0.3, 1e-13],
        &[r, r, q, q],
    )
    .unwrap();
    assert_eq!(rep.per_regime[&r].ratio, 3.0);
    assert_eq!(rep.per_regime[&q].ratio, 1.0);
    assert_eq!((rep.per_regime[&q].excluded, rep.excluded), (1, 1));
}

#[test]
fn oracle_ratio_closed_form() {
    let s_k = |k: usize| (k as f64 + 0.5) / 10.0;
    let k_const = (0..10).map(|k| (1.0 - 2.0 * s_k(k)).powi(2)).sum::<f64>()
        / (0.6 * (0..10).map(|k| (PI * s_k(k)).sin()).sum::<f64>());
    let samples = synth_generate(4000, 13, 0.0).unwrap();
    for s in &samples {
        let c: f64 = (0..15)
            .map(|j| {
                (-(s.neighbor_x[j].powi(2) + s.neighbor_y[j].powi(2) + s.neighbor_z[j].powi(2))
                    .sqrt())
                .exp()
            })
            .sum();
        let phi = s.solid_fraction;
        let expected = (1.0 + phi) / (1.0 - phi) * (1.0 + c).powi(2) * k_const;
        let got = s.pressure_component[0].abs() / s.shear_component[0].abs();
        assert!(
            (got - expected).abs() < 1e-12 * expected,
            "{got} vs {expected}"
        );
    }

    // No Re dependence at all, so the per-regime means rise with φ only.
    let px: Vec<f64> = samples.iter().map(|s| s.pressure_component[0]).collect();
    let sx: Vec<f64> = samples.iter().map(|s| s.shear_component[0]).collect();
    let regimes: Vec<FlowRegime> = samples.iter().map(|s| s.regime().unwrap()).collect();
    let rep = pressure_shear_ratio(&px, &sx, &regimes).unwrap();
    let by_phi: Vec<f64> = SOLID_FRACTION_VALUES
        .iter()
        .map(|&phi| {
            let v: Vec<f64> = rep
                .per_regime
                .iter()
                .filter(|(r, _)| r.solid_fraction() == phi)
                .map(|(_, e)| e.ratio)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    assert!(by_phi.windows(2).all(|w| w[0] < w[1]), "{by_phi:?}");
}

#[test]
fn histogram_cases() {
    let r = FlowRegime::from_index(1).unwrap();
    let field = Tensor::filled(&[4, 10], 3.0);
    let (lo, hi) = value_range(&field).unwrap();
    let h = field_histogram(&field, &[r; 4], 8, lo, hi).unwrap();
    let bins = &h.per_regime[&r];
    assert_eq!(bins.iter().filter(|&&b| b > 0.0).count(), 1);
    assert_eq!(bins.iter().sum::<f64>(), 1.0);

    // 8 bins over [0, 8): values 0.5, 1.5, ... land one per bin.
    let grid = Tensor::new(vec![8, 10], (0..80).map(|i| (i % 8) as f64 + 0.5).collect()).unwrap();
    let h = field_histogram(&grid, &[r; 8], 8, 0.0, 8.0).unwrap();
    assert!(h.per_regime[&r].iter().all(|&b| (b - 0.125).abs() < 1e-15));

    let outside = Tensor::new(
        vec![1, 10],
        vec![-1.0, 9.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
    )
    .unwrap();
    let h = field_histogram(&outside, &[r], 8, 0.0, 8.0).unwrap();
    assert_eq!(h.clamped, 2);
    assert_eq!((h.per_regime[&r][0], h.per_regime[&r][7]), (0.1, 0.1));
    assert!(field_histogram(&outside, &[r], 1, 0.0, 8.0).is_err());
    assert!(field_histogram(&outside, &[r], 4, 2.0, 2.0).is_err());
}

fn arb_errors() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..3.0], 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn aurec_monotone_under_domination(base in arb_errors(), shrink in prop::collection::vec(0.0f64..=1.0, 60), bound in 0.1f64..2.0) {
        let better: Vec<f64> = base.iter().zip(&shrink).map(|(e, s)| e * s).collect();
        let a = aurec(&base, bound).unwrap();
        let b = aurec(&better, bound).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b >= a - 1e-15);
    }

    #[test]
    fn curve_is_a_cdf(errors in arb_errors()) {
        let c = RelErrorCurve::new(&errors, 1.0).unwrap();
        prop_assert!(c.thresholds.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.cdf.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(*c.cdf.last().unwrap() <= 1.0);
        let zeros = errors.iter().filter(|&&e| e == 0.0).count() as f64 / errors.len() as f64;
        prop_assert_eq!(c.cdf[0], zeros);
    }

    #[test]
    fn mre_invariant_under_joint_scaling(seed in 0u64..10_000) {
        let mut r = common::rng(seed);
        let n = 30;
        let regimes = common::random_regimes(&mut r, n);
        let truth: Vec<f64> = (0..n).map(|_| r.random_range(1.0..50.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|t| t + r.random_range(-5.0..5.0)).collect();
        let means: BTreeMap<FlowRegime, f64> = FlowRegime::all().map(|g| (g, r.random_range(5.0..40.0))).collect();
        let base = compute_metrics(&pred, &truth, &regimes, &aggregates(|g| means[&g]), 1.0).unwrap();
        for c in [0.5, 3.0] {
            let scale = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
            let m = compute_metrics(&scale(&pred), &scale(&truth), &regimes, &aggregates(|g| c * means[&g]), 1.0).unwrap();
            prop_assert!((m.mre - base.mre).abs() < 1e-10 * base.mre.max(1.0));
            prop_assert!((m.aurec - base.aurec).abs() < 1e-12);
        }
    }

    #[test]
    fn histograms_normalize(seed in 0u64..10_000, bins in 2usize..100) {
        let mut r = common::rng(seed);
        let rows = 25;
        let field = common::normal_tensor(&mut r, &[rows, 10]);
        let regimes = common::random_regimes(&mut r, rows);
        let h = field_histogram(&field, &regimes, bins, -1.0, 1.0).unwrap();
        for counts in h.per_regime.values() {
            prop_assert_eq!(counts.len(), bins);
            prop_assert!((counts.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
