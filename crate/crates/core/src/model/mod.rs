//! The multi-channel embedding network.
//!
//! Per layer, every relation channel runs `ReLU(Σ_{k=1..K} P_t^k Z Θ_t)` on the
//! shared aggregated input `Z`, and the channel outputs are merged by the
//! configured [`Aggregator`]. A whole-graph branch runs the same convolution
//! on the full adjacency; the two are concatenated and passed through a
//! fully-connected ReLU layer to give the final embeddings, and a softmax
//! classifier head sits on top.

mod check;
mod config;
mod forward;
mod params;
mod tensors;

pub use check::{gradcheck_combinations, gradcheck_config, gradcheck_graph, model_gradcheck};
pub use config::{Aggregator, ModelConfig};
pub use forward::{
    aggregate_attention, aggregate_gated, aggregate_mean, aggregate_pooling, build_forward, channel_forward, forward,
    predict_labels, Dropout, ForwardNodes, ForwardOutput,
};
pub use params::{init_params, param_group, ModelParams, Param, ParamKind, PARAM_GROUPS};
pub use tensors::GraphTensors;
