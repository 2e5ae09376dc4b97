use rand::Rng;

use super::kind::ModelKind;
use super::output::BatchOutput;
use super::ArchitectureConfig;
use crate::data::{FlowRegime, LabelBlock, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::nn::{
    avgpool1d_backward, avgpool1d_forward, kink_signature, Activation, Conv1d, Conv1dCache, Dense,
    DenseCache, LayerSpec, ParamId, ParameterStore, Tensor,
};

#[derive(Debug, Clone)]
pub struct PhydnnNet {
    pub shared: Vec<Dense>,
    pub pressure_head: Dense,
    pub velocity_head: Dense,
    pub conv: Conv1d,
    pub pool_window: usize,
    pub pressure_component: Dense,
    pub shear_component: Dense,
    pub output: Dense,
}

/// Plain feed-forward trunk; with a field the output row is `[drag | field…]`.
#[derive(Debug, Clone)]
pub struct MlpNet {
    pub hidden: Vec<Dense>,
    pub output: Dense,
    pub field: Option<LabelBlock>,
}

/// Shared trunk followed by disjoint drag and field branches.
#[derive(Debug, Clone)]
pub struct MultiTaskNet {
    pub shared: Vec<Dense>,
    pub drag_branch: Vec<Dense>,
    pub drag_output: Dense,
    pub field_branch: Vec<Dense>,
    pub field_output: Dense,
    pub field: LabelBlock,
}

#[derive(Debug, Clone)]
pub enum Network {
    Phydnn(PhydnnNet),
    Mlp(MlpNet),
    MultiTask(MultiTaskNet),
    MeanBaseline { table: ParamId },
    Linear(Dense),
}

#[derive(Debug, Clone)]
pub struct PhydnnTrace {
    shared: Vec<DenseCache>,
    pressure_head: DenseCache,
    velocity_head: DenseCache,
    post: PostFieldTrace,
}

#[derive(Debug, Clone)]
pub struct PostFieldTrace {
    conv: Conv1dCache,
    conv_out_shape: Vec<usize>,
    pressure_component: DenseCache,
    shear_component: DenseCache,
    output: DenseCache,
}

#[derive(Debug, Clone)]
pub enum Trace {
    Phydnn(PhydnnTrace),
    Mlp {
        hidden: Vec<DenseCache>,
        output: DenseCache,
    },
    MultiTask {
        shared: Vec<DenseCache>,
        drag_branch: Vec<DenseCache>,
        drag_output: DenseCache,
        field_branch: Vec<DenseCache>,
        field_output: DenseCache,
    },
    MeanBaseline {
        regimes: Vec<FlowRegime>,
    },
    Linear(DenseCache),
}

/// Output of a forward pass, with caches when run in training mode.
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: BatchOutput,
    pub trace: Option<Trace>,
}

fn build_stack<R: Rng>(
    store: &mut ParameterStore,
    prefix: &str,
    input: usize,
    width: usize,
    layers: usize,
    activation: Activation,
    rng: &mut R,
) -> Result<Vec<Dense>> {
    (0..layers)
        .map(|i| {
            let in_dim = if i == 0 { input } else { width };
            Dense::build(
                store,
                &format!("{prefix}.{i}"),
                in_dim,
                width,
                activation,
                rng,
            )
        })
        .collect()
}

fn run_stack(
    layers: &[Dense],
    store: &ParameterStore,
    input: &Tensor,
    caches: &mut Vec<DenseCache>,
) -> Result<Tensor> {
    let mut x = input.clone();
    for layer in layers {
        let (y, cache) = layer.forward(store, &x)?;
        caches.push(cache);
        x = y;
    }
    Ok(x)
}

fn back_stack(
    layers: &[Dense],
    caches: &[DenseCache],
    store: &mut ParameterStore,
    grad: Tensor,
) -> Result<Tensor> {
    if layers.len() != caches.len() {
        return Err(Error::MissingForwardCache);
    }
    let mut g = grad;
    for (layer, cache) in layers.iter().zip(caches).rev() {
        g = layer.backward(store, cache, &g)?;
    }
    Ok(g)
}

fn relu_preacts<'a>(
    layers: &'a [Dense],
    caches: &'a [DenseCache],
) -> impl Iterator<Item = &'a Tensor> {
    layers
        .iter()
        .zip(caches)
        .filter(|(l, _)| l.activation == Activation::Relu)
        .map(|(_, c)| &c.pre_activation)
}

fn grad_or_zero(g: Option<&Tensor>, shape: &[usize]) -> Result<Tensor> {
    match g {
        Some(t) if t.shape() == shape => Ok(t.clone()),
        Some(t) => Err(Error::shape("output gradient", t.shape(), shape)),
        None => Ok(Tensor::zeros(shape)),
    }
}

impl PhydnnNet {
    /// Conv → pool → component heads → drag, all linear.
    pub fn post_field(
        &self,
        store: &ParameterStore,
        pressure: &Tensor,
        velocity: &Tensor,
        _record: bool,
    ) -> Result<(BatchOutput, PostFieldTrace)> {
        let (batch, len) = pressure.expect_rank2("pressure field")?;
        if velocity.shape() != pressure.shape() {
            return Err(Error::shape(
                "velocity vs pressure field",
                velocity.shape(),
                pressure.shape(),
            ));
        }
        let stacked = Tensor::concat_cols(&[pressure, velocity])?.reshape(&[batch, 2, len])?;
        let (conv_out, conv) = self.conv.forward(store, &stacked)?;
        let conv_out_shape = conv_out.shape().to_vec();
        let pooled = avgpool1d_forward(&conv_out, self.pool_window)?;
        let pooled_dim = pooled.len() / batch.max(1);
        let pooled = pooled.reshape(&[batch, pooled_dim])?;
        let (fp, fp_cache) = self.pressure_component.forward(store, &pooled)?;
        let (fs, fs_cache) = self.shear_component.forward(store, &pooled)?;
        let components = Tensor::concat_cols(&[&fp, &fs])?;
        let (drag, out_cache) = self.output.forward(store, &components)?;
        let output = BatchOutput {
            drag,
            pressure_field: Some(pressure.clone()),
            velocity_field: Some(velocity.clone()),
            pressure_component: Some(fp),
            shear_component: Some(fs),
        };
        Ok((
            output,
            PostFieldTrace {
                conv,
                conv_out_shape,
                pressure_component: fp_cache,
                shear_component: fs_cache,
                output: out_cache,
            },
        ))
    }

    fn forward(&self, store: &ParameterStore, x: &Tensor) -> Result<(BatchOutput, PhydnnTrace)> {
        let mut shared = Vec::with_capacity(self.shared.len());
        let h = run_stack(&self.shared, store, x, &mut shared)?;
        let (p, p_cache) = self.pressure_head.forward(store, &h)?;
        let (v, v_cache) = self.velocity_head.forward(store, &h)?;
        let (output, post) = self.post_field(store, &p, &v, true)?;
        Ok((
            output,
            PhydnnTrace {
                shared,
                pressure_head: p_cache,
                velocity_head: v_cache,
                post,
            },
        ))
    }

    fn backward(&self, store: &mut ParameterStore, t: &PhydnnTrace, g: &BatchOutput) -> Result<()> {
        let batch = g.drag.batch();
        let post = &t.post;
        let d_components = self.output.backward(store, &post.output, &g.drag)?;
        let comp_dim = post.pressure_component.pre_activation.shape()[1];
        let (mut d_fp, mut d_fs) = d_components.split_cols(comp_dim)?;
        d_fp.add_assign(&grad_or_zero(g.pressure_component.as_ref(), d_fp.shape())?)?;
        d_fs.add_assign(&grad_or_zero(g.shear_component.as_ref(), d_fs.shape())?)?;
        let mut d_pooled =
            self.pressure_component
                .backward(store, &post.pressure_component, &d_fp)?;
        d_pooled.add_assign(&self.shear_component.backward(
            store,
            &post.shear_component,
            &d_fs,
        )?)?;
        let c_out = post.conv_out_shape[1];
        let pooled_len = d_pooled.len() / (batch.max(1) * c_out);
        let d_pooled = d_pooled.reshape(&[batch, c_out, pooled_len])?;
        let d_conv = avgpool1d_backward(&d_pooled, &post.conv_out_shape, self.pool_window)?;
        let d_stacked = self.conv.backward(store, &post.conv, &d_conv)?;
        let len = d_stacked.shape()[2];
        let (mut d_p, mut d_v) = d_stacked.reshape(&[batch, 2 * len])?.split_cols(len)?;
        d_p.add_assign(&grad_or_zero(g.pressure_field.as_ref(), d_p.shape())?)?;
        d_v.add_assign(&grad_or_zero(g.velocity_field.as_ref(), d_v.shape())?)?;
        let mut d_h = self.pressure_head.backward(store, &t.pressure_head, &d_p)?;
        d_h.add_assign(&self.velocity_head.backward(store, &t.velocity_head, &d_v)?)?;
        back_stack(&self.shared, &t.shared, store, d_h)?;
        Ok(())
    }
}

impl Network {
    pub(super) fn build<R: Rng>(
        kind: ModelKind,
        cfg: &ArchitectureConfig,
        store: &mut ParameterStore,
        rng: &mut R,
    ) -> Result<Self> {
        let width = cfg.hidden_width;
        let act = cfg.shared_activation;
        let lin = Activation::Linear;
        Ok(match kind {
            ModelKind::Phydnn | ModelKind::PhydnnFxOnly => {
                let comp = if kind == ModelKind::PhydnnFxOnly {
                    1
                } else {
                    cfg.component_dim
                };
                let shared = build_stack(
                    store,
                    "shared",
                    FEATURE_DIM,
                    width,
                    cfg.shared_layers,
                    act,
                    rng,
                )?;
                let pressure_head =
                    Dense::build(store, "pressure_field", width, cfg.field_dim, lin, rng)?;
                let velocity_head =
                    Dense::build(store, "velocity_field", width, cfg.field_dim, lin, rng)?;
                let conv = Conv1d::build(
                    store,
                    "conv",
                    2,
                    cfg.conv_out_channels,
                    cfg.conv_kernel,
                    cfg.conv_padding,
                    rng,
                )?;
                let pooled = cfg.pooled_features;
                let pressure_component =
                    Dense::build(store, "pressure_component", pooled, comp, lin, rng)?;
                let shear_component =
                    Dense::build(store, "shear_component", pooled, comp, lin, rng)?;
                let output = Dense::build(store, "output", 2 * comp, 1, lin, rng)?;
                Network::Phydnn(PhydnnNet {
                    shared,
                    pressure_head,
                    velocity_head,
                    conv,
                    pool_window: cfg.pool_window()?,
                    pressure_component,
                    shear_component,
                    output,
                })
            }
            ModelKind::Dnn | ModelKind::DnnPlusPres | ModelKind::DnnPlusVel => {
                let field = match kind {
                    ModelKind::DnnPlusPres => Some(LabelBlock::PressureField),
                    ModelKind::DnnPlusVel => Some(LabelBlock::VelocityField),
                    _ => None,
                };
                let hidden = build_stack(
                    store,
                    "hidden",
                    FEATURE_DIM,
                    width,
                    cfg.dnn_hidden_layers,
                    act,
                    rng,
                )?;
                let out_dim = 1 + field.map_or(0, |_| cfg.field_dim);
                let output = Dense::build(store, "output", width, out_dim, lin, rng)?;
                Network::Mlp(MlpNet {
                    hidden,
                    output,
                    field,
                })
            }
            ModelKind::DnnMtPres | ModelKind::DnnMtVel => {
                let field = if kind == ModelKind::DnnMtPres {
                    LabelBlock::PressureField
                } else {
                    LabelBlock::VelocityField
                };
                let shared = build_stack(
                    store,
                    "shared",
                    FEATURE_DIM,
                    width,
                    cfg.mt_shared_layers,
                    act,
                    rng,
                )?;
                let drag_branch =
                    build_stack(store, "drag", width, width, cfg.mt_branch_layers, act, rng)?;
                let drag_output = Dense::build(store, "drag.output", width, 1, lin, rng)?;
                let field_branch =
                    build_stack(store, "field", width, width, cfg.mt_branch_layers, act, rng)?;
                let field_output =
                    Dense::build(store, "field.output", width, cfg.field_dim, lin, rng)?;
                Network::MultiTask(MultiTaskNet {
                    shared,
                    drag_branch,
                    drag_output,
                    field_branch,
                    field_output,
                    field,
                })
            }
            ModelKind::MeanBaseline => Network::MeanBaseline {
                table: store.insert("regime_drag", Tensor::zeros(&[16]))?,
            },
            ModelKind::LinearRegression => {
                Network::Linear(Dense::build(store, "linear", FEATURE_DIM, 1, lin, rng)?)
            }
        })
    }

    pub fn forward(
        &self,
        store: &ParameterStore,
        x: &Tensor,
        regimes: &[FlowRegime],
        record: bool,
    ) -> Result<Forward> {
        let (batch, width) = x.expect_rank2("features")?;
        if width != FEATURE_DIM {
            return Err(Error::shape("features", x.shape(), &[batch, FEATURE_DIM]));
        }
        if regimes.len() != batch {
            return Err(Error::shape(
                "regime keys vs batch",
                &[regimes.len()],
                &[batch],
            ));
        }
        let (output, trace) = match self {
            Network::Phydnn(net) => {
                let (o, t) = net.forward(store, x)?;
                (o, Trace::Phydnn(t))
            }
            Network::Mlp(net) => {
                let mut hidden = Vec::with_capacity(net.hidden.len());
                let h = run_stack(&net.hidden, store, x, &mut hidden)?;
                let (y, output) = net.output.forward(store, &h)?;
                let out = match net.field {
                    None => BatchOutput::drag_only(y),
                    Some(block) => {
                        let (drag, field) = y.split_cols(1)?;
                        let mut o = BatchOutput::drag_only(drag);
                        set_field(&mut o, block, field);
                        o
                    }
                };
                (out, Trace::Mlp { hidden, output })
            }
            Network::MultiTask(net) => {
                let mut shared = Vec::new();
                let h = run_stack(&net.shared, store, x, &mut shared)?;
                let mut drag_branch = Vec::new();
                let hd = run_stack(&net.drag_branch, store, &h, &mut drag_branch)?;
                let (drag, drag_output) = net.drag_output.forward(store, &hd)?;
                let mut field_branch = Vec::new();
                let hf = run_stack(&net.field_branch, store, &h, &mut field_branch)?;
                let (field, field_output) = net.field_output.forward(store, &hf)?;
                let mut o = BatchOutput::drag_only(drag);
                set_field(&mut o, net.field, field);
                (
                    o,
                    Trace::MultiTask {
                        shared,
                        drag_branch,
                        drag_output,
                        field_branch,
                        field_output,
                    },
                )
            }
            Network::MeanBaseline { table } => {
                let t = store.value(*table).values();
                let drag = regimes.iter().map(|r| t[r.index()]).collect();
                (
                    BatchOutput::drag_only(Tensor::new(vec![batch, 1], drag)?),
                    Trace::MeanBaseline {
                        regimes: regimes.to_vec(),
                    },
                )
            }
            Network::Linear(layer) => {
                let (y, cache) = layer.forward(store, x)?;
                (BatchOutput::drag_only(y), Trace::Linear(cache))
            }
        };
        Ok(Forward {
            output,
            trace: record.then_some(trace),
        })
    }

    pub fn backward(
        &self,
        store: &mut ParameterStore,
        pass: &Forward,
        g: &BatchOutput,
    ) -> Result<()> {
        let trace = pass.trace.as_ref().ok_or(Error::MissingForwardCache)?;
        if g.drag.shape() != pass.output.drag.shape() {
            return Err(Error::shape(
                "drag gradient",
                g.drag.shape(),
                pass.output.drag.shape(),
            ));
        }
        match (self, trace) {
            (Network::Phydnn(net), Trace::Phydnn(t)) => net.backward(store, t, g),
            (Network::Mlp(net), Trace::Mlp { hidden, output }) => {
                let d_out = match net.field {
                    None => g.drag.clone(),
                    Some(block) => {
                        let field_shape = [g.drag.batch(), output.pre_activation.shape()[1] - 1];
                        let d_field = grad_or_zero(g.block(block), &field_shape)?;
                        Tensor::concat_cols(&[&g.drag, &d_field])?
                    }
                };
                let d_h = net.output.backward(store, output, &d_out)?;
                back_stack(&net.hidden, hidden, store, d_h)?;
                Ok(())
            }
            (
                Network::MultiTask(net),
                Trace::MultiTask {
                    shared,
                    drag_branch,
                    drag_output,
                    field_branch,
                    field_output,
                },
            ) => {
                let d_hd = net.drag_output.backward(store, drag_output, &g.drag)?;
                let mut d_h = back_stack(&net.drag_branch, drag_branch, store, d_hd)?;
                let field_shape = field_output.pre_activation.shape().to_vec();
                let d_field = grad_or_zero(g.block(net.field), &field_shape)?;
                let d_hf = net.field_output.backward(store, field_output, &d_field)?;
                d_h.add_assign(&back_stack(&net.field_branch, field_branch, store, d_hf)?)?;
                back_stack(&net.shared, shared, store, d_h)?;
                Ok(())
            }
            (Network::MeanBaseline { table }, Trace::MeanBaseline { regimes }) => {
                let grads = store.grad_mut(*table).values_mut();
                for (r, g) in regimes.iter().zip(g.drag.values()) {
                    grads[r.index()] += g;
                }
                Ok(())
            }
            (Network::Linear(layer), Trace::Linear(cache)) => {
                layer.backward(store, cache, &g.drag)?;
                Ok(())
            }
            _ => Err(Error::MissingForwardCache),
        }
    }

    /// Hash of every relu on/off state in a recorded pass (0 when nothing was recorded).
    pub fn kink_signature(&self, pass: &Forward) -> u64 {
        match (self, &pass.trace) {
            (Network::Phydnn(net), Some(Trace::Phydnn(t))) => {
                kink_signature(relu_preacts(&net.shared, &t.shared))
            }
            (Network::Mlp(net), Some(Trace::Mlp { hidden, .. })) => {
                kink_signature(relu_preacts(&net.hidden, hidden))
            }
            (
                Network::MultiTask(net),
                Some(Trace::MultiTask {
                    shared,
                    drag_branch,
                    field_branch,
                    ..
                }),
            ) => kink_signature(
                relu_preacts(&net.shared, shared)
                    .chain(relu_preacts(&net.drag_branch, drag_branch))
                    .chain(relu_preacts(&net.field_branch, field_branch)),
            ),
            _ => 0,
        }
    }

    pub fn layer_specs(&self, store: &ParameterStore) -> Vec<LayerSpec> {
        let dense = |ls: &[Dense]| ls.iter().map(|l| l.spec(store)).collect::<Vec<_>>();
        match self {
            Network::Phydnn(n) => {
                let mut v = dense(&n.shared);
                v.push(n.pressure_head.spec(store));
                v.push(n.velocity_head.spec(store));
                v.push(n.conv.spec(store));
                v.push(LayerSpec::AvgPool1d {
                    window: n.pool_window,
                });
                v.push(n.pressure_component.spec(store));
                v.push(n.shear_component.spec(store));
                v.push(n.output.spec(store));
                v
            }
            Network::Mlp(n) => {
                let mut v = dense(&n.hidden);
                v.push(n.output.spec(store));
                v
            }
            Network::MultiTask(n) => {
                let mut v = dense(&n.shared);
                v.extend(dense(&n.drag_branch));
                v.push(n.drag_output.spec(store));
                v.extend(dense(&n.field_branch));
                v.push(n.field_output.spec(store));
                v
            }
            Network::MeanBaseline { .. } => Vec::new(),
            Network::Linear(l) => vec![l.spec(store)],
        }
    }
}

fn set_field(o: &mut BatchOutput, block: LabelBlock, field: Tensor) {
    match block {
        LabelBlock::PressureField => o.pressure_field = Some(field),
        LabelBlock::VelocityField => o.velocity_field = Some(field),
        _ => unreachable!("only field blocks are attached here"),
    }
}
