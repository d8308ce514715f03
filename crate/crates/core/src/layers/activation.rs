use super::qtensor::QVar;
use crate::autodiff::{Graph, Var};
use crate::error::Result;

/// Scalar activations usable through [`split_activation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Relu,
    /// Leaky rectifier with a fixed slope; learnable slopes go through [`prelu`].
    Leaky(f64),
}

/// Applies a real activation to each component plane independently.
pub fn split_activation(g: &mut Graph, input: QVar, act: Activation) -> Result<QVar> {
    match act {
        Activation::Identity => Ok(input),
        Activation::Relu => input.map(g, |g, v| Ok(g.relu(v))),
        Activation::Leaky(a) => {
            let c = input.shape(g)[1];
            let slope = g.constant(crate::tensor::Tensor::full(&[c], a));
            prelu(g, input, slope)
        }
    }
}

/// Split PReLU with one slope per quaternion channel (axis 1), shared by the
/// four components of that channel.
pub fn prelu(g: &mut Graph, input: QVar, slopes: Var) -> Result<QVar> {
    input.map(g, |g, v| g.prelu(v, slopes, 1))
}
