//! Forward and reverse-mode rules for the four layer kinds.
//!
//! Forward functions return the output together with a cache holding what the
//! matching backward rule needs. Backward rules return gradients with respect
//! to the layer input and to each parameter; they never mutate anything.

use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParameterStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative with the convention relu'(0) = 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Declarative description of a layer, used for validation and parameter accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    AvgPool1d {
        window: usize,
    },
    Activation {
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } if in_dim == 0 || out_dim == 0 => {
                Err(Error::invalid("dense layer dimensions must be at least 1"))
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } if in_channels == 0 || out_channels == 0 || kernel == 0 => Err(Error::invalid(
                "conv1d channels and kernel must be at least 1",
            )),
            LayerSpec::AvgPool1d { window: 0 } => {
                Err(Error::invalid("pool window must be at least 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match *self {
            LayerSpec::Dense {
                in_dim, out_dim, ..
            } => in_dim * out_dim + out_dim,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel + out_channels,
            LayerSpec::AvgPool1d { .. } | LayerSpec::Activation { .. } => 0,
        }
    }
}

/// `c = a·b + beta·c` with arbitrary strides, row-major `c`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices whose extents cover every strided access
    // for the given (m, k, n), and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Tensor,
    pub pre_activation: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<(Tensor, DenseCache)> {
    let (batch, in_dim) = input.expect_rank2("dense input")?;
    let (w_in, out_dim) = weights.expect_rank2("dense weights")?;
    if w_in != in_dim {
        return Err(Error::shape(
            "dense input × weights",
            input.shape(),
            weights.shape(),
        ));
    }
    if bias.shape() != [out_dim] {
        return Err(Error::shape("dense bias", bias.shape(), &[out_dim]));
    }
    let mut z = Vec::with_capacity(batch * out_dim);
    for _ in 0..batch {
        z.extend_from_slice(bias.values());
    }
    gemm(
        batch,
        in_dim,
        out_dim,
        input.values(),
        (in_dim as isize, 1),
        weights.values(),
        (out_dim as isize, 1),
        1.0,
        &mut z,
    );
    let pre_activation = Tensor::new(vec![batch, out_dim], z)?;
    let out = match activation {
        Activation::Linear => pre_activation.clone(),
        Activation::Relu => {
            let v = pre_activation
                .values()
                .iter()
                .map(|&x| activation.apply(x))
                .collect();
            Tensor::new(vec![batch, out_dim], v)?
        }
    };
    Ok((
        out,
        DenseCache {
            input: input.clone(),
            pre_activation,
        },
    ))
}

pub fn dense_backward(
    upstream: &Tensor,
    cache: &DenseCache,
    weights: &Tensor,
    activation: Activation,
) -> Result<DenseGrads> {
    let (batch, in_dim) = cache.input.expect_rank2("dense cached input")?;
    let (w_in, out_dim) = weights.expect_rank2("dense weights")?;
    if w_in != in_dim {
        return Err(Error::shape(
            "dense cached input × weights",
            cache.input.shape(),
            weights.shape(),
        ));
    }
    if upstream.shape() != cache.pre_activation.shape() {
        return Err(Error::shape(
            "dense upstream gradient",
            upstream.shape(),
            cache.pre_activation.shape(),
        ));
    }
    let dz: Vec<f64> = match activation {
        Activation::Linear => upstream.values().to_vec(),
        Activation::Relu => upstream
            .values()
            .iter()
            .zip(cache.pre_activation.values())
            .map(|(&g, &z)| g * activation.derivative(z))
            .collect(),
    };

    let mut w_grad = vec![0.0; in_dim * out_dim];
    gemm(
        in_dim,
        batch,
        out_dim,
        cache.input.values(),
        (1, in_dim as isize),
        &dz,
        (out_dim as isize, 1),
        0.0,
        &mut w_grad,
    );
    let mut in_grad = vec![0.0; batch * in_dim];
    gemm(
        batch,
        out_dim,
        in_dim,
        &dz,
        (out_dim as isize, 1),
        weights.values(),
        (1, out_dim as isize),
        0.0,
        &mut in_grad,
    );
    let mut b_grad = vec![0.0; out_dim];
    for row in dz.chunks_exact(out_dim) {
        for (acc, g) in b_grad.iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![batch, in_dim], in_grad)?,
        weights: Tensor::new(vec![in_dim, out_dim], w_grad)?,
        bias: Tensor::new(vec![out_dim], b_grad)?,
    })
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    pub input: Tensor,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

fn conv_geometry(
    input: &Tensor,
    kernels: &Tensor,
    padding: usize,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let (batch, c_in, len) = input.expect_rank3("conv1d input")?;
    let (c_out, k_in, k) = kernels.expect_rank3("conv1d kernels")?;
    if k_in != c_in {
        return Err(Error::shape(
            "conv1d input channels × kernels",
            input.shape(),
            kernels.shape(),
        ));
    }
    if k == 0 || len + 2 * padding < k {
        return Err(Error::invalid(format!(
            "conv1d output length would be non-positive (length {len}, padding {padding}, kernel {k})"
        )));
    }
    let out_len = len + 2 * padding - k + 1;
    Ok((batch, c_in, len, c_out, k, out_len))
}

/// Zero-padded 1-D cross-correlation: `out[b,o,l] = bias[o] + Σ_c Σ_j w[o,c,j]·x[b,c,l+j-padding]`.
pub fn conv1d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    padding: usize,
) -> Result<(Tensor, Conv1dCache)> {
    let (batch, c_in, len, c_out, k, out_len) = conv_geometry(input, kernels, padding)?;
    if bias.shape() != [c_out] {
        return Err(Error::shape("conv1d bias", bias.shape(), &[c_out]));
    }
    let x = input.values();
    let w = kernels.values();
    let mut out = vec![0.0; batch * c_out * out_len];
    for b in 0..batch {
        for o in 0..c_out {
            let dst = &mut out[(b * c_out + o) * out_len..(b * c_out + o + 1) * out_len];
            for (l, slot) in dst.iter_mut().enumerate() {
                let mut acc = bias.values()[o];
                for c in 0..c_in {
                    let xs = &x[(b * c_in + c) * len..(b * c_in + c + 1) * len];
                    let ws = &w[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                    for (j, wj) in ws.iter().enumerate() {
                        let pos = l + j;
                        if pos >= padding && pos - padding < len {
                            acc += wj * xs[pos - padding];
                        }
                    }
                }
                *slot = acc;
            }
        }
    }
    Ok((
        Tensor::new(vec![batch, c_out, out_len], out)?,
        Conv1dCache {
            input: input.clone(),
            padding,
        },
    ))
}

pub fn conv1d_backward(
    upstream: &Tensor,
    cache: &Conv1dCache,
    kernels: &Tensor,
) -> Result<Conv1dGrads> {
    let padding = cache.padding;
    let (batch, c_in, len, c_out, k, out_len) = conv_geometry(&cache.input, kernels, padding)?;
    if upstream.shape() != [batch, c_out, out_len] {
        return Err(Error::shape(
            "conv1d upstream gradient",
            upstream.shape(),
            &[batch, c_out, out_len],
        ));
    }
    let x = cache.input.values();
    let w = kernels.values();
    let g = upstream.values();
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; c_out];
    for b in 0..batch {
        for o in 0..c_out {
            let gs = &g[(b * c_out + o) * out_len..(b * c_out + o + 1) * out_len];
            db[o] += gs.iter().sum::<f64>();
            for c in 0..c_in {
                let x_off = (b * c_in + c) * len;
                let w_off = (o * c_in + c) * k;
                for (l, &gl) in gs.iter().enumerate() {
                    for j in 0..k {
                        let pos = l + j;
                        if pos >= padding && pos - padding < len {
                            let xi = x_off + pos - padding;
                            dw[w_off + j] += gl * x[xi];
                            dx[xi] += gl * w[w_off + j];
                        }
                    }
                }
            }
        }
    }
    Ok(Conv1dGrads {
        input: Tensor::new(cache.input.shape().to_vec(), dx)?,
        kernels: Tensor::new(kernels.shape().to_vec(), dw)?,
        bias: Tensor::new(vec![c_out], db)?,
    })
}

/// Non-overlapping window means along the last axis of a `batch × C × L` tensor.
pub fn avgpool1d_forward(input: &Tensor, window: usize) -> Result<Tensor> {
    let (batch, channels, len) = input.expect_rank3("avgpool1d input")?;
    if window == 0 || len % window != 0 {
        return Err(Error::invalid(format!(
            "pool window {window} does not divide length {len}"
        )));
    }
    let inv = 1.0 / window as f64;
    let out = input
        .values()
        .chunks_exact(window)
        .map(|w| w.iter().sum::<f64>() * inv)
        .collect();
    Tensor::new(vec![batch, channels, len / window], out)
}

pub fn avgpool1d_backward(
    upstream: &Tensor,
    input_shape: &[usize],
    window: usize,
) -> Result<Tensor> {
    let expected = match input_shape {
        &[b, c, l] if window > 0 && l % window == 0 => [b, c, l / window],
        _ => {
            return Err(Error::invalid(format!(
                "pool window {window} incompatible with {input_shape:?}"
            )))
        }
    };
    if upstream.shape() != expected {
        return Err(Error::shape(
            "avgpool1d upstream gradient",
            upstream.shape(),
            &expected,
        ));
    }
    let inv = 1.0 / window as f64;
    let mut dx = Vec::with_capacity(upstream.len() * window);
    for &g in upstream.values() {
        dx.extend(std::iter::repeat_n(g * inv, window));
    }
    Tensor::new(input_shape.to_vec(), dx)
}

pub fn activation_forward(input: &Tensor, activation: Activation) -> Tensor {
    let v = input
        .values()
        .iter()
        .map(|&x| activation.apply(x))
        .collect();
    Tensor::new(input.shape().to_vec(), v).expect("same shape")
}

pub fn activation_backward(
    upstream: &Tensor,
    input: &Tensor,
    activation: Activation,
) -> Result<Tensor> {
    if upstream.shape() != input.shape() {
        return Err(Error::shape(
            "activation upstream gradient",
            upstream.shape(),
            input.shape(),
        ));
    }
    let v = upstream
        .values()
        .iter()
        .zip(input.values())
        .map(|(&g, &x)| g * activation.derivative(x))
        .collect();
    Tensor::new(input.shape().to_vec(), v)
}

/// Dense layer bound to entries of a parameter store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub weights: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl Dense {
    pub fn build<R: rand::Rng>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        LayerSpec::Dense {
            in_dim,
            out_dim,
            activation,
        }
        .validate()?;
        let weights = store.insert_glorot(
            format!("{name}.weight"),
            &[in_dim, out_dim],
            in_dim,
            out_dim,
            rng,
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn forward(&self, store: &ParameterStore, input: &Tensor) -> Result<(Tensor, DenseCache)> {
        dense_forward(
            input,
            store.value(self.weights),
            store.value(self.bias),
            self.activation,
        )
    }

    /// Accumulates parameter gradients into `store` and returns the input gradient.
    pub fn backward(
        &self,
        store: &mut ParameterStore,
        cache: &DenseCache,
        upstream: &Tensor,
    ) -> Result<Tensor> {
        let grads = dense_backward(upstream, cache, store.value(self.weights), self.activation)?;
        store.grad_mut(self.weights).add_assign(&grads.weights)?;
        store.grad_mut(self.bias).add_assign(&grads.bias)?;
        Ok(grads.input)
    }

    pub fn spec(&self, store: &ParameterStore) -> LayerSpec {
        let shape = store.value(self.weights).shape();
        LayerSpec::Dense {
            in_dim: shape[0],
            out_dim: shape[1],
            activation: self.activation,
        }
    }
}

/// Conv1d layer bound to entries of a parameter store.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    pub kernels: ParamId,
    pub bias: ParamId,
    pub padding: usize,
}

impl Conv1d {
    pub fn build<R: rand::Rng>(
        store: &mut ParameterStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            padding,
        }
        .validate()?;
        let kernels = store.insert_glorot(
            format!("{name}.kernel"),
            &[out_channels, in_channels, kernel],
            in_channels * kernel,
            out_channels * kernel,
            rng,
        )?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Self {
            kernels,
            bias,
            padding,
        })
    }

    pub fn forward(&self, store: &ParameterStore, input: &Tensor) -> Result<(Tensor, Conv1dCache)> {
        conv1d_forward(
            input,
            store.value(self.kernels),
            store.value(self.bias),
            self.padding,
        )
    }

    pub fn backward(
        &self,
        store: &mut ParameterStore,
        cache: &Conv1dCache,
        upstream: &Tensor,
    ) -> Result<Tensor> {
        let grads = conv1d_backward(upstream, cache, store.value(self.kernels))?;
        store.grad_mut(self.kernels).add_assign(&grads.kernels)?;
        store.grad_mut(self.bias).add_assign(&grads.bias)?;
        Ok(grads.input)
    }

    pub fn spec(&self, store: &ParameterStore) -> LayerSpec {
        let shape = store.value(self.kernels).shape();
        LayerSpec::Conv1d {
            in_channels: shape[1],
            out_channels: shape[0],
            kernel: shape[2],
            padding: self.padding,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn dense_identity_weights_pass_input_through() {
        let x = t(&[2, 3], &[1., -2., 3., 0.5, 0.25, -7.]);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.values_mut()[i * 3 + i] = 1.0;
        }
        let (y, _) = dense_forward(&x, &eye, &Tensor::zeros(&[3]), Activation::Linear).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dense_zero_weights_give_bias_rows() {
        let x = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        let b = t(&[4], &[0.5, -1., 2., 3.]);
        let (y, _) = dense_forward(&x, &Tensor::zeros(&[2, 4]), &b, Activation::Linear).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), b.values());
        }
    }

    #[test]
    fn dense_hand_evaluated_relu() {
        let x = t(&[1, 2], &[1., 2.]);
        let w = t(&[2, 2], &[1., 0., 0., -1.]);
        let b = t(&[2], &[0., 3.]);
        let (y, _) = dense_forward(&x, &w, &b, Activation::Relu).unwrap();
        assert_eq!(y.values(), &[1., 1.]);
    }

    #[test]
    fn dense_shape_mismatch_names_both_shapes() {
        let err = dense_forward(
            &Tensor::zeros(&[2, 3]),
            &Tensor::zeros(&[4, 2]),
            &Tensor::zeros(&[2]),
            Activation::Linear,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn dense_zero_upstream_gives_zero_gradients() {
        let x = t(&[2, 2], &[1., 2., 3., 4.]);
        let w = t(&[2, 3], &[0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        let (y, cache) = dense_forward(&x, &w, &Tensor::zeros(&[3]), Activation::Relu).unwrap();
        let g = dense_backward(&Tensor::zeros(y.shape()), &cache, &w, Activation::Relu).unwrap();
        assert!(g
            .input
            .values()
            .iter()
            .chain(g.weights.values())
            .chain(g.bias.values())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn dense_linear_weight_grad_is_outer_product() {
        let x = t(&[1, 3], &[1., 2., 3.]);
        let w = Tensor::filled(&[3, 2], 0.3);
        let (_, cache) = dense_forward(&x, &w, &Tensor::zeros(&[2]), Activation::Linear).unwrap();
        let up = t(&[1, 2], &[0.5, -2.]);
        let g = dense_backward(&up, &cache, &w, Activation::Linear).unwrap();
        assert_eq!(g.weights.values(), &[0.5, -2., 1., -4., 1.5, -6.]);
        assert_eq!(g.bias.values(), &[0.5, -2.]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300), 1.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let x = t(&[1, 1, 4], &[1., 2., 3., 4.]);
        let (y, _) = conv1d_forward(&x, &t(&[1, 1, 1], &[1.]), &Tensor::zeros(&[1]), 0).unwrap();
        assert_eq!(y.values(), x.values());
    }

    #[test]
    fn conv_hand_evaluated() {
        let x = t(&[1, 1, 3], &[1., 2., 3.]);
        let (y, _) =
            conv1d_forward(&x, &t(&[1, 1, 2], &[1., 1.]), &Tensor::zeros(&[1]), 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        assert_eq!(y.values(), &[3., 5.]);
    }

    #[test]
    fn conv_padding_preserves_length() {
        let x = t(&[1, 1, 3], &[1., 2., 3.]);
        let (y, _) =
            conv1d_forward(&x, &t(&[1, 1, 3], &[1., 1., 1.]), &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y.values(), &[3., 6., 5.]);
    }

    #[test]
    fn conv_rejects_non_positive_output_length() {
        let x = Tensor::zeros(&[1, 1, 2]);
        assert!(conv1d_forward(&x, &Tensor::zeros(&[1, 1, 3]), &Tensor::zeros(&[1]), 0).is_err());
    }

    #[test]
    fn avgpool_cases() {
        let x = t(&[1, 1, 4], &[1., 3., 5., 7.]);
        assert_eq!(avgpool1d_forward(&x, 2).unwrap().values(), &[2., 6.]);
        assert_eq!(avgpool1d_forward(&x, 4).unwrap().values(), &[4.]);
        let c = Tensor::filled(&[2, 3, 6], 1.25);
        assert!(avgpool1d_forward(&c, 3)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 1.25));
        assert!(avgpool1d_forward(&x, 3).is_err());
    }

    #[test]
    fn avgpool_backward_spreads_evenly() {
        let g = t(&[1, 1, 2], &[2., 4.]);
        let dx = avgpool1d_backward(&g, &[1, 1, 4], 2).unwrap();
        assert_eq!(dx.values(), &[1., 1., 2., 2.]);
    }

    #[test]
    fn layer_spec_validation() {
        assert!(LayerSpec::Dense {
            in_dim: 0,
            out_dim: 1,
            activation: Activation::Relu
        }
        .validate()
        .is_err());
        assert!(LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 1,
            kernel: 0,
            padding: 0
        }
        .validate()
        .is_err());
        assert_eq!(
            LayerSpec::Dense {
                in_dim: 47,
                out_dim: 128,
                activation: Activation::Relu
            }
            .parameter_count(),
            6144
        );
    }
}
