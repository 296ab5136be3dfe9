//! Minimal network engine: the generic linear layer, its dense and
//! convolutional specializations, direct whitening, activations and loss.
//!
//! A sample entering a layer is an `N×M` matrix whose row `n` is the feature
//! vector `x_n` at spatial position `n`. A layer output is `R×S` in the same
//! layout, so it feeds the next layer directly (`N' = R`, `M' = S`).

mod layer;
mod loss;
mod network;
mod whiten;

pub use layer::{ConvSpec, GenericLinearLayer, LayerGradients, LayerShape, Tap};
pub use loss::{relu_backward_in_place, relu_in_place, softmax_cross_entropy};
pub(crate) use network::argmax;
pub use network::{Architecture, ConvStage, ForwardTrace, Network};
pub use whiten::{direct_whiten_backward, direct_whiten_forward};
