//! Named trainable parameters and the per-graph binding used during a pass.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Whether the L2 penalty applies to this parameter.
    pub regularized: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, regularized: bool) -> ParamId {
        self.params.push(Param { name: name.into(), value, regularized });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable real scalars.
    pub fn count_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }
}

/// Gradients for every parameter of a store, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        ParamGrads { grads: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect() }
    }

    /// Wraps one tensor per stored parameter, in store order.
    pub fn from_tensors(grads: Vec<Tensor>) -> Self {
        ParamGrads { grads }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Whether stochastic layers are active.
#[derive(Debug, Clone)]
pub enum Mode {
    Train(Box<ChaCha8Rng>),
    Eval,
}

/// One forward/backward pass: a fresh graph plus lazily bound parameters.
pub struct Session<'a> {
    pub graph: Graph,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    mode: Mode,
}

impl<'a> Session<'a> {
    pub fn new(store: &'a ParamStore, mode: Mode) -> Self {
        Session { graph: Graph::new(), store, bound: vec![None; store.len()], mode }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.graph.leaf(self.store.get(id).value.clone());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn is_training(&self) -> bool {
        matches!(self.mode, Mode::Train(_))
    }

    pub fn rng(&mut self) -> Option<&mut ChaCha8Rng> {
        match &mut self.mode {
            Mode::Train(rng) => Some(&mut **rng),
            Mode::Eval => None,
        }
    }

    /// The graph together with the dropout RNG (absent in eval mode).
    pub fn graph_and_rng(&mut self) -> (&mut Graph, Option<&mut ChaCha8Rng>) {
        let rng = match &mut self.mode {
            Mode::Train(rng) => Some(&mut **rng),
            Mode::Eval => None,
        };
        (&mut self.graph, rng)
    }

    /// Backpropagates `loss` and collects one gradient per stored parameter;
    /// parameters the pass never touched get zeros.
    pub fn param_grads(&self, loss: Var) -> Result<ParamGrads> {
        let mut grads = self.graph.backward(loss)?;
        let out = self
            .store
            .iter()
            .zip(&self.bound)
            .map(|(p, b)| {
                b.and_then(|v| grads.take(v)).unwrap_or_else(|| Tensor::zeros(p.value.shape()))
            })
            .collect();
        Ok(ParamGrads { grads: out })
    }
}

pub(crate) fn check_finite(store: &ParamStore, grads: &ParamGrads) -> Result<()> {
    for (p, g) in store.iter().zip(grads.iter()) {
        let bad = g.data().iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            return Err(Error::NonFinite { param: p.name.clone(), count: bad });
        }
    }
    Ok(())
}
