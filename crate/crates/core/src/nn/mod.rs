//! Layers with manual backpropagation and their sequential composition.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod loss;
pub mod network;
pub mod pool;

pub use activation::{activation_backward, activation_forward, ActivationKind};
pub use conv::{conv2d_backward, conv2d_forward, conv_matrix, ConvCache, ConvGeometry};
pub use loss::{softmax, softmax_xent};
pub use network::{
    forward_prefix, network_backward, network_forward, ForwardCache, LayerSpec, Mode,
    NetworkConfig, Params,
};
