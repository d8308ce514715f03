//! Quaternion-valued layers built from real tensor operations.
//!
//! A quaternion tensor is four real tensors of identical shape, one per
//! component. Convolutions and dense layers mix the four planes with the
//! Hamilton product; activations, pooling and dropout act per component but
//! treat the four components of a unit as one entity where that matters.

mod activation;
mod count;
mod dropout;
mod hamilton;
mod init;
mod pool;
mod qtensor;

pub use activation::{prelu, split_activation, Activation};
pub use count::{LayerShape, Algebra};
pub use dropout::{dropout_mask, quaternion_dropout};
pub use hamilton::{hamilton_apply, QConv2d, QDense};
pub use init::{quaternion_init, InitCriterion, InitSpec, PolarDraw};
pub use pool::split_maxpool_freq;
pub use qtensor::{QTensor, QVar};
