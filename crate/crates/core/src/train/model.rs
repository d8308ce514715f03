//! The acoustic model:
//!
//! ```text
//! qconv → PReLU → maxpool(freq)
//!   → (n−1) × [qconv → PReLU → dropout]
//!   → flatten per frame
//!   → n_dense × [qdense → PReLU → dropout]
//!   → real affine over the four concatenated planes → logits per frame
//! ```
//!
//! The time axis is never pooled, so the output has one logit vector per
//! input frame.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::Var;
use crate::ctc::SymbolTable;
use crate::error::{Error, Result};
use crate::layers::{
    prelu, quaternion_dropout, split_maxpool_freq, Algebra, InitSpec, LayerShape, QConv2d, QDense,
    QTensor, QVar,
};
use crate::params::{Mode, ParamId, ParamStore, Session};
use crate::tensor::{Conv2dGeometry, Tensor};

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: QConv2d,
    slopes: ParamId,
    dropout: bool,
}

#[derive(Debug, Clone)]
struct DenseBlock {
    dense: QDense,
    slopes: ParamId,
}

#[derive(Debug, Clone)]
struct OutputHead {
    weight: ParamId,
    bias: Option<ParamId>,
    inputs: usize,
}

/// One row of the layer table printed by `inspect`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub shape: LayerShape,
    /// Real scalars in the quaternion layer's weights.
    pub weights: usize,
    /// Weights of the real layer with the same real-equivalent widths.
    pub real_weights: usize,
    /// All trainable scalars owned by the layer (weights, biases, slopes).
    pub params: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    symbols: SymbolTable,
    convs: Vec<ConvBlock>,
    denses: Vec<DenseBlock>,
    head: OutputHead,
}

impl Model {
    /// Builds and initializes a model; identical `cfg` and `seed` give
    /// identical parameters.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let symbols = cfg.symbol_table()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let [kh, kw] = cfg.kernel;
        let geom = Conv2dGeometry::same(kh, kw);
        let criterion = cfg.init.into();

        let mut convs = Vec::with_capacity(cfg.n_conv_layers);
        for i in 0..cfg.n_conv_layers {
            let in_q = if i == 0 { 1 } else { cfg.feature_maps };
            let (n_in, n_out) = QConv2d::fan(in_q, cfg.feature_maps, (kh, kw));
            let hidden = i > 0;
            let name = format!("conv{i}");
            let conv = QConv2d::new(
                &mut store,
                &name,
                in_q,
                cfg.feature_maps,
                (kh, kw),
                geom,
                cfg.bias,
                &InitSpec::new(criterion, n_in, n_out),
                hidden,
                &mut rng,
            )?;
            let slopes = store.add(format!("{name}.prelu"), Tensor::full(&[cfg.feature_maps], cfg.prelu_init), false);
            convs.push(ConvBlock { conv, slopes, dropout: hidden });
        }

        let mut width = cfg.feature_maps * cfg.pooled_bands();
        let mut denses = Vec::with_capacity(cfg.n_dense);
        for i in 0..cfg.n_dense {
            let name = format!("dense{i}");
            let dense = QDense::new(
                &mut store,
                &name,
                width,
                cfg.dense_width,
                cfg.bias,
                &InitSpec::new(criterion, width, cfg.dense_width),
                true,
                &mut rng,
            )?;
            let slopes = store.add(format!("{name}.prelu"), Tensor::full(&[cfg.dense_width], cfg.prelu_init), false);
            denses.push(DenseBlock { dense, slopes });
            width = cfg.dense_width;
        }

        let inputs = 4 * width;
        let classes = symbols.n_classes();
        let scale = (2.0 / (inputs + classes) as f64).sqrt();
        let normal = rand_distr::StandardNormal;
        let w = Tensor::from_fn(&[inputs, classes], |_| {
            scale * rand_distr::Distribution::<f64>::sample(&normal, &mut rng)
        });
        let weight = store.add("output.weight", w, false);
        let bias = cfg.bias.then(|| store.add("output.bias", Tensor::zeros(&[classes]), false));
        let head = OutputHead { weight, bias, inputs };

        Ok(Model { cfg: cfg.clone(), store, symbols, convs, denses, head })
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    /// Total trainable real scalars.
    pub fn count_params(&self) -> usize {
        self.store.count_scalars()
    }

    /// Logits `[frames, classes]` for one utterance of shape
    /// `(1, 1, bands, frames)`.
    pub fn forward(&self, sess: &mut Session, features: &QTensor) -> Result<Var> {
        let shape = features.shape();
        if shape.len() != 4 || shape[0] != 1 || shape[1] != 1 || shape[2] != self.cfg.input_bands {
            return Err(Error::shape(
                "model input",
                format!("expected (1, 1, {}, frames), got {shape:?}", self.cfg.input_bands),
            ));
        }
        let frames = shape[3];
        let mut x = QVar::constant(&mut sess.graph, features);
        for (i, block) in self.convs.iter().enumerate() {
            x = block.conv.forward(sess, x)?;
            let slopes = sess.param(block.slopes);
            x = prelu(&mut sess.graph, x, slopes)?;
            if i == 0 {
                x = split_maxpool_freq(&mut sess.graph, x, self.cfg.pool_width)?;
            }
            if block.dropout {
                x = self.dropout(sess, x)?;
            }
        }

        let flat = self.cfg.feature_maps * self.cfg.pooled_bands();
        x = x.map(&mut sess.graph, |g, v| {
            let p = g.permute(v, &[0, 3, 1, 2])?;
            g.reshape(p, &[frames, flat])
        })?;

        for block in &self.denses {
            x = block.dense.forward(sess, x)?;
            let slopes = sess.param(block.slopes);
            x = prelu(&mut sess.graph, x, slopes)?;
            x = self.dropout(sess, x)?;
        }

        let joined = sess.graph.concat(&x.planes(), 1)?;
        let w = sess.param(self.head.weight);
        let mut logits = sess.graph.matmul(joined, w)?;
        if let Some(b) = self.head.bias {
            let b = sess.param(b);
            logits = sess.graph.add_bias(logits, b, 1)?;
        }
        Ok(logits)
    }

    fn dropout(&self, sess: &mut Session, x: QVar) -> Result<QVar> {
        let (graph, rng) = sess.graph_and_rng();
        quaternion_dropout(graph, x, self.cfg.dropout, rng)
    }

    /// Inference-mode logits as a plain tensor.
    pub fn logits(&self, features: &QTensor) -> Result<Tensor> {
        let mut sess = Session::new(&self.store, Mode::Eval);
        let out = self.forward(&mut sess, features)?;
        Ok(sess.graph.value(out).clone())
    }

    pub fn layer_table(&self) -> Vec<LayerInfo> {
        let size = |id: ParamId| self.store.get(id).value.len();
        let opt_size = |ids: Option<[ParamId; 4]>| ids.map_or(0, |ids| ids.iter().map(|&i| size(i)).sum());
        let mut rows = Vec::new();
        for (i, b) in self.convs.iter().enumerate() {
            let c = &b.conv;
            let shape = LayerShape::Conv { in_ch: c.in_q, out_ch: c.out_q, kh: c.kernel.0, kw: c.kernel.1 };
            rows.push(LayerInfo {
                name: format!("conv{i}"),
                shape,
                weights: shape.weight_count(Algebra::Quaternion),
                real_weights: shape.real_equivalent().weight_count(Algebra::Real),
                params: c.weight_count() + opt_size(c.bias) + size(b.slopes),
            });
        }
        for (i, b) in self.denses.iter().enumerate() {
            let d = &b.dense;
            let shape = LayerShape::Dense { inputs: d.in_q, outputs: d.out_q };
            rows.push(LayerInfo {
                name: format!("dense{i}"),
                shape,
                weights: shape.weight_count(Algebra::Quaternion),
                real_weights: shape.real_equivalent().weight_count(Algebra::Real),
                params: d.weight_count() + opt_size(d.bias) + size(b.slopes),
            });
        }
        let shape = LayerShape::Dense { inputs: self.head.inputs, outputs: self.symbols.n_classes() };
        let w = shape.weight_count(Algebra::Real);
        rows.push(LayerInfo {
            name: "output".into(),
            shape,
            weights: w,
            real_weights: w,
            params: w + self.head.bias.map_or(0, size),
        });
        rows
    }

    /// Checks that `other` has the same parameter names and shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.store.len() == other.len()
            && self
                .store
                .iter()
                .zip(other.iter())
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape() && a.regularized == b.regularized)
    }
}

/// Trainable scalars of the real-valued network whose every layer has the
/// same real-equivalent width as the quaternion model built from `cfg`
/// (one PReLU slope per real channel, real biases).
pub fn real_equivalent_param_count(cfg: &ModelConfig) -> usize {
    let [kh, kw] = cfg.kernel;
    let maps = 4 * cfg.feature_maps;
    let bias = usize::from(cfg.bias);
    let mut total = 0;
    for i in 0..cfg.n_conv_layers {
        let in_ch = if i == 0 { 4 } else { maps };
        total += LayerShape::Conv { in_ch, out_ch: maps, kh, kw }.weight_count(Algebra::Real) + maps * (1 + bias);
    }
    let mut width = maps * cfg.pooled_bands();
    for _ in 0..cfg.n_dense {
        let out = 4 * cfg.dense_width;
        total += LayerShape::Dense { inputs: width, outputs: out }.weight_count(Algebra::Real) + out * (1 + bias);
        width = out;
    }
    let classes = cfg.symbols.len() + 1;
    total + width * classes + classes * bias
}
