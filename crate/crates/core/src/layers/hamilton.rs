use rand::Rng;

use super::init::{quaternion_init, InitSpec};
use super::qtensor::{QTensor, QVar};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore, Session};
use crate::tensor::{Conv2dGeometry, Tensor};

/// Signed (weight plane, input plane) terms of each output component of
/// `W ⊗ X`. Plane order is (r, i, j, k).
const HAMILTON_TERMS: [[(f64, usize, usize); 4]; 4] = [
    [(1.0, 0, 0), (-1.0, 1, 1), (-1.0, 2, 2), (-1.0, 3, 3)],
    [(1.0, 0, 1), (1.0, 1, 0), (1.0, 2, 3), (-1.0, 3, 2)],
    [(1.0, 0, 2), (-1.0, 1, 3), (1.0, 2, 0), (1.0, 3, 1)],
    [(1.0, 0, 3), (1.0, 1, 2), (-1.0, 2, 1), (1.0, 3, 0)],
];

/// Computes `W ⊗ X` where `product(w, x)` is the real bilinear map (a
/// convolution or matrix product) between one weight plane and one input
/// plane. Sixteen products are formed and combined component-wise.
pub fn hamilton_apply(
    g: &mut Graph,
    weights: [Var; 4],
    input: QVar,
    mut product: impl FnMut(&mut Graph, Var, Var) -> Result<Var>,
) -> Result<QVar> {
    let inputs = input.planes();
    let mut out = Vec::with_capacity(4);
    for terms in HAMILTON_TERMS {
        let mut acc: Option<Var> = None;
        for (sign, w, x) in terms {
            let term = product(g, weights[w], inputs[x])?;
            acc = Some(match acc {
                None if sign > 0.0 => term,
                None => g.scale(term, -1.0),
                Some(a) if sign > 0.0 => g.add(a, term)?,
                Some(a) => g.sub(a, term)?,
            });
        }
        out.push(acc.expect("four terms per component"));
    }
    Ok(QVar::from_planes([out[0], out[1], out[2], out[3]]))
}

fn add_quaternion_bias(g: &mut Graph, x: QVar, bias: [Var; 4], axis: usize) -> Result<QVar> {
    Ok(QVar {
        r: g.add_bias(x.r, bias[0], axis)?,
        x: g.add_bias(x.x, bias[1], axis)?,
        y: g.add_bias(x.y, bias[2], axis)?,
        z: g.add_bias(x.z, bias[3], axis)?,
    })
}

fn register_weights(
    store: &mut ParamStore,
    name: &str,
    weights: QTensor,
    regularized: bool,
) -> [ParamId; 4] {
    let [r, x, y, z] = weights.into_planes();
    [
        store.add(format!("{name}.weight.r"), r, regularized),
        store.add(format!("{name}.weight.i"), x, regularized),
        store.add(format!("{name}.weight.j"), y, regularized),
        store.add(format!("{name}.weight.k"), z, regularized),
    ]
}

fn register_bias(store: &mut ParamStore, name: &str, n: usize) -> [ParamId; 4] {
    ["r", "i", "j", "k"].map(|c| store.add(format!("{name}.bias.{c}"), Tensor::zeros(&[n]), false))
}

fn bind(sess: &mut Session, ids: [ParamId; 4]) -> [Var; 4] {
    ids.map(|id| sess.param(id))
}

/// Quaternion 2-D convolution over `(batch, q_channels, freq, time)`.
///
/// Kernel planes have shape `[out_q, in_q, kh, kw]`; the bias holds one
/// quaternion per output channel and starts at zero.
#[derive(Debug, Clone)]
pub struct QConv2d {
    pub in_q: usize,
    pub out_q: usize,
    pub kernel: (usize, usize),
    pub geom: Conv2dGeometry,
    pub weight: [ParamId; 4],
    pub bias: Option<[ParamId; 4]>,
}

impl QConv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_q: usize,
        out_q: usize,
        kernel: (usize, usize),
        geom: Conv2dGeometry,
        with_bias: bool,
        init: &InitSpec,
        regularized: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weights = quaternion_init(init, &[out_q, in_q, kernel.0, kernel.1], rng)?;
        let weight = register_weights(store, name, weights, regularized);
        let bias = with_bias.then(|| register_bias(store, name, out_q));
        Ok(QConv2d { in_q, out_q, kernel, geom, weight, bias })
    }

    /// He/Glorot fan sizes in quaternion units times receptive field.
    pub fn fan(in_q: usize, out_q: usize, kernel: (usize, usize)) -> (usize, usize) {
        let rf = kernel.0 * kernel.1;
        (in_q * rf, out_q * rf)
    }

    pub fn forward(&self, sess: &mut Session, input: QVar) -> Result<QVar> {
        let shape = input.shape(&sess.graph);
        if shape.len() != 4 || shape[1] != self.in_q {
            return Err(Error::shape(
                "qconv2d",
                format!("expected (batch, {}, freq, time) input, got {shape:?}", self.in_q),
            ));
        }
        let w = bind(sess, self.weight);
        let geom = self.geom;
        let out = hamilton_apply(&mut sess.graph, w, input, |g, w, x| g.conv2d(x, w, geom))?;
        match self.bias {
            Some(b) => {
                let b = bind(sess, b);
                add_quaternion_bias(&mut sess.graph, out, b, 1)
            }
            None => Ok(out),
        }
    }

    pub fn weight_count(&self) -> usize {
        4 * self.out_q * self.in_q * self.kernel.0 * self.kernel.1
    }
}

/// Quaternion fully connected layer over `(rows, in_q)` activations.
///
/// Weight planes have shape `[in_q, out_q]` so that the real products are
/// `x · W`.
#[derive(Debug, Clone)]
pub struct QDense {
    pub in_q: usize,
    pub out_q: usize,
    pub weight: [ParamId; 4],
    pub bias: Option<[ParamId; 4]>,
}

impl QDense {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_q: usize,
        out_q: usize,
        with_bias: bool,
        init: &InitSpec,
        regularized: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weights = quaternion_init(init, &[in_q, out_q], rng)?;
        let weight = register_weights(store, name, weights, regularized);
        let bias = with_bias.then(|| register_bias(store, name, out_q));
        Ok(QDense { in_q, out_q, weight, bias })
    }

    pub fn forward(&self, sess: &mut Session, input: QVar) -> Result<QVar> {
        let shape = input.shape(&sess.graph);
        if shape.len() != 2 || shape[1] != self.in_q {
            return Err(Error::shape(
                "qdense",
                format!("expected (rows, {}) input, got {shape:?}", self.in_q),
            ));
        }
        let w = bind(sess, self.weight);
        let out = hamilton_apply(&mut sess.graph, w, input, |g, w, x| g.matmul(x, w))?;
        match self.bias {
            Some(b) => {
                let b = bind(sess, b);
                add_quaternion_bias(&mut sess.graph, out, b, 1)
            }
            None => Ok(out),
        }
    }

    pub fn weight_count(&self) -> usize {
        4 * self.in_q * self.out_q
    }
}
