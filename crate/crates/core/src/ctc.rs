//! Connectionist temporal classification.
//!
//! Logits are `[frames, classes]` with `classes = labels + 1`; the blank is
//! the last class. The loss is the negative log of the total probability of
//! every frame-level path that collapses onto the target, computed with the
//! forward-backward recursion in log space.

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{dims2, Tensor};

/// Output alphabet plus the reserved blank, which always takes the last index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
}

impl SymbolTable {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::config("symbols", "symbol table is empty"));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::config("symbols", format!("invalid symbol {s:?}")));
            }
            if symbols[..i].contains(s) {
                return Err(Error::config("symbols", format!("duplicate symbol {s:?}")));
            }
        }
        Ok(SymbolTable { symbols })
    }

    pub fn n_labels(&self) -> usize {
        self.symbols.len()
    }

    /// Width of a logit vector: labels plus blank.
    pub fn n_classes(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn blank(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize> {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .ok_or_else(|| Error::UnknownSymbol(symbol.to_string()))
    }

    pub fn encode<'s>(&self, symbols: impl IntoIterator<Item = &'s str>) -> Result<Vec<usize>> {
        symbols.into_iter().map(|s| self.index_of(s)).collect()
    }

    pub fn decode(&self, labels: &[usize]) -> Vec<&str> {
        labels.iter().filter_map(|&i| self.symbols.get(i).map(String::as_str)).collect()
    }
}

/// Merges runs of repeated indices, then removes blanks.
pub fn collapse(latent: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in latent {
        if prev != Some(s) && s != blank {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Fewest frames that can emit `target`: one per label plus a separating
/// blank between each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn validate_target(target: &[usize], classes: usize, blank: usize) -> Result<()> {
    if target.is_empty() {
        return Err(Error::EmptyTarget);
    }
    if let Some(&bad) = target.iter().find(|&&s| s >= classes || s == blank) {
        return Err(Error::InvalidSymbol { index: bad, blank, n_labels: classes - 1 });
    }
    Ok(())
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_softmax_rows(logits: &Tensor, frames: usize, classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; frames * classes];
    for t in 0..frames {
        let row = &logits.data()[t * classes..(t + 1) * classes];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lz = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        for (o, v) in out[t * classes..(t + 1) * classes].iter_mut().zip(row) {
            *o = v - lz;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtcOutput {
    /// `-ln P(target | logits)`.
    pub loss: f64,
    /// Gradient of `loss` with respect to the logits, `[frames, classes]`.
    pub grad: Tensor,
}

/// CTC loss and its gradient for one utterance.
pub fn ctc_loss(logits: &Tensor, target: &[usize], blank: usize) -> Result<CtcOutput> {
    let [frames, classes] = dims2("ctc_loss", logits)?;
    if blank >= classes {
        return Err(Error::shape("ctc_loss", format!("blank {blank} outside {classes} classes")));
    }
    validate_target(target, classes, blank)?;
    let required = min_frames(target);
    if frames < required {
        return Err(Error::InfeasibleAlignment { target_len: target.len(), required, frames });
    }

    let lp = log_softmax_rows(logits, frames, classes);
    let lp_at = |t: usize, k: usize| lp[t * classes + k];

    // Blank-augmented label sequence: -, l1, -, l2, ..., lm, -
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(target.iter().flat_map(|&l| [l, blank]))
        .collect();
    let s_len = ext.len();
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let ninf = f64::NEG_INFINITY;
    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = lp_at(0, ext[0]);
    alpha[1] = lp_at(0, ext[1]);
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_add(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = log_add(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = acc + lp_at(t, ext[s]);
        }
    }

    let mut beta = vec![ninf; frames * s_len];
    let last = frames - 1;
    beta[last * s_len + s_len - 1] = lp_at(last, ext[s_len - 1]);
    beta[last * s_len + s_len - 2] = lp_at(last, ext[s_len - 2]);
    for t in (0..last).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut acc = next[s];
            if s + 1 < s_len {
                acc = log_add(acc, next[s + 1]);
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = log_add(acc, next[s + 2]);
            }
            beta[t * s_len + s] = acc + lp_at(t, ext[s]);
        }
    }

    let log_p = log_add(alpha[last * s_len + s_len - 1], alpha[last * s_len + s_len - 2]);

    let mut grad = vec![0.0; frames * classes];
    let mut occupancy = vec![ninf; classes];
    for t in 0..frames {
        occupancy.fill(ninf);
        for s in 0..s_len {
            let k = ext[s];
            let v = alpha[t * s_len + s] + beta[t * s_len + s] - lp_at(t, k);
            occupancy[k] = log_add(occupancy[k], v);
        }
        for k in 0..classes {
            grad[t * classes + k] = lp_at(t, k).exp() - (occupancy[k] - log_p).exp();
        }
    }

    Ok(CtcOutput { loss: -log_p, grad: Tensor::new(&[frames, classes], grad)? })
}

/// Records the CTC loss of `logits` on the graph as a scalar node.
pub fn ctc_loss_node(g: &mut Graph, logits: Var, target: &[usize], blank: usize) -> Result<Var> {
    let out = ctc_loss(g.value(logits), target, blank)?;
    g.precomputed(logits, out.loss, out.grad)
}

/// Per-frame argmax (lowest index on ties) followed by [`collapse`].
pub fn best_path_decode(logits: &Tensor, blank: usize) -> Result<Vec<usize>> {
    let [frames, classes] = dims2("best_path_decode", logits)?;
    let latent: Vec<usize> = (0..frames)
        .map(|t| {
            let row = &logits.data()[t * classes..(t + 1) * classes];
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect();
    Ok(collapse(&latent, blank))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchCtc {
    pub sum: f64,
    pub mean: f64,
    pub grads: Vec<Tensor>,
}

/// Sum (and mean) of per-example CTC losses. Gradients are those of the sum.
pub fn batch_ctc_loss(batch: &[(Tensor, Vec<usize>)], blank: usize) -> Result<BatchCtc> {
    let mut sum = 0.0;
    let mut grads = Vec::with_capacity(batch.len());
    for (index, (logits, target)) in batch.iter().enumerate() {
        let out = ctc_loss(logits, target, blank)
            .map_err(|e| Error::BatchExample { index, source: Box::new(e) })?;
        sum += out.loss;
        grads.push(out.grad);
    }
    let mean = if batch.is_empty() { 0.0 } else { sum / batch.len() as f64 };
    Ok(BatchCtc { sum, mean, grads })
}
