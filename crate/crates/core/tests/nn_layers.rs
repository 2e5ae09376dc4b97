mod common;

use common::{activation_check, avgpool_check, conv_check, dense_check, normal_tensor, rng};
use phydnn::nn::{
    adam_step, avgpool1d_forward, conv1d_forward, dense_forward, Activation, AdamConfig,
    ParameterStore, Tensor,
};
use proptest::prelude::*;

const INSTANCES: u64 = 120;
const TOL: f64 = 1e-5;

fn assert_all(name: &str, check: impl Fn(u64) -> phydnn::nn::GradCheckReport) {
    let mut checked = 0;
    for seed in 0..INSTANCES {
        let r = check(seed);
        assert!(r.max_rel_error < TOL, "{name} seed {seed}: {r:?}");
        checked += r.checked;
    }
    assert!(checked > 0, "{name}: every coordinate was skipped");
}

#[test]
fn dense_relu_gradients() {
    assert_all("dense relu", |s| dense_check(s, Activation::Relu));
}

#[test]
fn dense_linear_gradients() {
    assert_all("dense linear", |s| dense_check(s, Activation::Linear));
}

#[test]
fn conv1d_gradients() {
    assert_all("conv1d", conv_check);
}

#[test]
fn avgpool1d_gradients() {
    assert_all("avgpool1d", avgpool_check);
}

#[test]
fn activation_gradients() {
    assert_all("relu", |s| activation_check(s, Activation::Relu));
    assert_all("linear", |s| activation_check(s, Activation::Linear));
}

#[test]
fn forward_is_pure() {
    let mut r = rng(5);
    let x = normal_tensor(&mut r, &[7, 5]);
    let w = normal_tensor(&mut r, &[5, 3]);
    let b = normal_tensor(&mut r, &[3]);
    let a = dense_forward(&x, &w, &b, Activation::Relu).unwrap().0;
    let c = dense_forward(&x, &w, &b, Activation::Relu).unwrap().0;
    assert_eq!(a.values(), c.values());
}

#[test]
fn adam_run_is_deterministic() {
    let run = || {
        let mut s = ParameterStore::new();
        let id = s
            .insert("w", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap())
            .unwrap();
        for t in 1..=50 {
            let g: Vec<f64> = s.value(id).values().iter().map(|w| 2.0 * w).collect();
            s.zero_grad();
            s.grad_mut(id).values_mut().copy_from_slice(&g);
            adam_step(&mut s, &AdamConfig::default(), t).unwrap();
        }
        s.value(id).values().to_vec()
    };
    let a = run();
    assert_eq!(a, run());
    // 50 steps of size ~lr move each weight towards zero by roughly 0.05.
    assert!(a[0] < 1.0 && a[0] > 0.9);
}

fn homogeneous_in(alpha: f64, f: impl Fn(&Tensor) -> Tensor, x: &Tensor) -> f64 {
    let mut scaled = x.clone();
    scaled.scale(alpha);
    let mut expected = f(x);
    expected.scale(alpha);
    f(&scaled)
        .values()
        .iter()
        .zip(expected.values())
        .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn dense_linear_homogeneous(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = normal_tensor(&mut r, &[3, 4]);
        let w = normal_tensor(&mut r, &[4, 2]);
        let zero = Tensor::zeros(&[2]);
        let err = homogeneous_in(alpha, |x| dense_forward(x, &w, &zero, Activation::Linear).unwrap().0, &x);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn conv_homogeneous(seed in 0u64..1000, alpha in -3.0f64..3.0) {
        let mut r = rng(seed);
        let x = normal_tensor(&mut r, &[2, 2, 10]);
        let k = normal_tensor(&mut r, &[4, 2, 3]);
        let zero = Tensor::zeros(&[4]);
        let err = homogeneous_in(alpha, |x| conv1d_forward(x, &k, &zero, 1).unwrap().0, &x);
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn avgpool_preserves_scaled_sum(seed in 0u64..1000, window in 1usize..6, blocks in 1usize..5) {
        let mut r = rng(seed);
        let x = normal_tensor(&mut r, &[2, 3, window * blocks]);
        let y = avgpool1d_forward(&x, window).unwrap();
        prop_assert!((y.sum() - x.sum() / window as f64).abs() < 1e-12);
    }
}
