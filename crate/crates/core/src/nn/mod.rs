//! Tensor, layer, reverse-mode gradient and optimizer primitives.

mod adam;
pub mod checkpoint;
mod gradcheck;
pub mod layers;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::StoreDocument;
pub use gradcheck::{
    grad_check, grad_check_sampled, kink_signature, relative_error, GradCheckReport, Probe,
};
pub use layers::{
    activation_backward, activation_forward, avgpool1d_backward, avgpool1d_forward,
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, Activation, Conv1d,
    Conv1dCache, Conv1dGrads, Dense, DenseCache, DenseGrads, LayerSpec,
};
pub use params::{ParamId, Parameter, ParameterStore};
pub use tensor::Tensor;
