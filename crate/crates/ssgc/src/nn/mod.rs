//! Network layers, manual backpropagation, Adam, and parameter accounting.

mod adam;
mod layers;
mod loss;
mod model;

pub use adam::{adam_step, AdamState};
pub use layers::{
    aggregate, conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool2_backward,
    maxpool2_forward, node_scale_backward, node_scale_forward, relu_backward, relu_forward,
    LayerSpec, Tensor,
};
pub use loss::softmax_cross_entropy;
pub use model::{count_params, Cache, ModelSpec, NnError, ParamBlock, ParamCounts, ParamSet};
