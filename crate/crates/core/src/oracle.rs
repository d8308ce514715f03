//! Slow, independent reference implementations.
//!
//! Nothing here calls into the optimized code paths it is used to check:
//! convolutions are plain nested loops, the quaternion layers are re-derived
//! from the real block matrix form, CTC is exhaustive path enumeration and
//! the spectrum is a direct DFT.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::features::FeatureConfig;
use crate::layers::QTensor;
use crate::tensor::Tensor;

/// Direct nested-loop cross-correlation with zero padding.
pub fn naive_conv2d(input: &Tensor, kernel: &Tensor, stride: (usize, usize), padding: (usize, usize)) -> Tensor {
    let s = input.shape();
    let k = kernel.shape();
    let (batch, cin, h, w) = (s[0], s[1], s[2], s[3]);
    let (cout, kh, kw) = (k[0], k[2], k[3]);
    let oh = (h + 2 * padding.0 - kh) / stride.0 + 1;
    let ow = (w + 2 * padding.1 - kw) / stride.1 + 1;
    let mut out = Tensor::zeros(&[batch, cout, oh, ow]);
    for b in 0..batch {
        for o in 0..cout {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for a in 0..kh {
                            for e in 0..kw {
                                let ii = (i * stride.0 + a) as isize - padding.0 as isize;
                                let jj = (j * stride.1 + e) as isize - padding.1 as isize;
                                if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                                    acc += input.at(&[b, c, ii as usize, jj as usize]) * kernel.at(&[o, c, a, e]);
                                }
                            }
                        }
                    }
                    out.set(&[b, o, i, j], acc);
                }
            }
        }
    }
    out
}

/// The real block matrix of a quaternion weight, as a table of
/// (sign, weight plane) per (output block, input block):
///
/// ```text
/// [ R -X -Y -Z ]
/// [ X  R -Z  Y ]
/// [ Y  Z  R -X ]
/// [ Z -Y  X  R ]
/// ```
const BLOCK: [[(f64, usize); 4]; 4] = [
    [(1.0, 0), (-1.0, 1), (-1.0, 2), (-1.0, 3)],
    [(1.0, 1), (1.0, 0), (-1.0, 3), (1.0, 2)],
    [(1.0, 2), (1.0, 3), (1.0, 0), (-1.0, 1)],
    [(1.0, 3), (-1.0, 2), (1.0, 1), (1.0, 0)],
];

/// Real kernel `[4·out_q, 4·in_q, kh, kw]` equivalent to a quaternion kernel
/// whose planes are `[out_q, in_q, kh, kw]`. Channel blocks are ordered
/// r, i, j, k.
pub fn block_real_kernel(w: &QTensor) -> Tensor {
    let s = w.shape();
    let (cout, cin, kh, kw) = (s[0], s[1], s[2], s[3]);
    let planes = w.planes();
    let mut out = Tensor::zeros(&[4 * cout, 4 * cin, kh, kw]);
    for (ob, row) in BLOCK.iter().enumerate() {
        for (ib, &(sign, p)) in row.iter().enumerate() {
            for o in 0..cout {
                for c in 0..cin {
                    for a in 0..kh {
                        for e in 0..kw {
                            let v = sign * planes[p].at(&[o, c, a, e]);
                            out.set(&[ob * cout + o, ib * cin + c, a, e], v);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Real matrix `[4·in_q, 4·out_q]` equivalent to a quaternion dense weight
/// with planes `[in_q, out_q]`, for row vectors `x · M`.
pub fn block_real_dense(w: &QTensor) -> Tensor {
    let s = w.shape();
    let (nin, nout) = (s[0], s[1]);
    let planes = w.planes();
    let mut out = Tensor::zeros(&[4 * nin, 4 * nout]);
    for (ob, row) in BLOCK.iter().enumerate() {
        for (ib, &(sign, p)) in row.iter().enumerate() {
            for i in 0..nin {
                for o in 0..nout {
                    out.set(&[ib * nin + i, ob * nout + o], sign * planes[p].at(&[i, o]));
                }
            }
        }
    }
    out
}

/// Concatenates the planes along axis 1 (r block first).
pub fn stack_planes(q: &QTensor) -> Tensor {
    let s = q.shape();
    let outer = s[0];
    let inner: usize = s[1..].iter().product();
    let mut data = Vec::with_capacity(4 * q.r.len());
    for b in 0..outer {
        for p in q.planes() {
            data.extend_from_slice(&p.data()[b * inner..(b + 1) * inner]);
        }
    }
    let mut shape = s.to_vec();
    shape[1] *= 4;
    Tensor::new(&shape, data).expect("stacked size")
}

/// Inverse of [`stack_planes`].
pub fn unstack_planes(t: &Tensor) -> QTensor {
    let s = t.shape();
    let mut shape = s.to_vec();
    shape[1] /= 4;
    let inner: usize = shape[1..].iter().product();
    let plane = |p: usize| {
        let mut data = Vec::with_capacity(s[0] * inner);
        for b in 0..s[0] {
            let start = (b * 4 + p) * inner;
            data.extend_from_slice(&t.data()[start..start + inner]);
        }
        Tensor::new(&shape, data).expect("plane size")
    };
    QTensor::from_planes([plane(0), plane(1), plane(2), plane(3)]).expect("equal planes")
}

/// Plain real matrix product by definition.
pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    Tensor::from_fn(&[m, n], |idx| {
        let (i, j) = (idx / n, idx % n);
        (0..k).map(|p| a.at(&[i, p]) * b.at(&[p, j])).sum()
    })
}

/// Removes consecutive duplicates, then drops blanks.
pub fn collapse_reference(latent: &[usize], blank: usize) -> Vec<usize> {
    let mut dedup = latent.to_vec();
    dedup.dedup();
    dedup.retain(|&s| s != blank);
    dedup
}

/// `-ln Σ P(path)` over every path of `frames` symbols that collapses to
/// `target`, by explicit enumeration of all `classes^frames` paths.
pub fn ctc_brute_force(logits: &Tensor, target: &[usize], blank: usize) -> f64 {
    let (frames, classes) = (logits.shape()[0], logits.shape()[1]);
    let probs: Vec<Vec<f64>> = (0..frames)
        .map(|t| {
            let row: Vec<f64> = (0..classes).map(|k| logits.at(&[t, k])).collect();
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            row.iter().map(|v| v.exp() / z).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    let n_paths = classes.pow(frames as u32);
    for code in 0..n_paths {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % classes;
            c /= classes;
        }
        if collapse_reference(&path, blank) == target {
            total += path.iter().enumerate().map(|(t, &k)| probs[t][k]).product::<f64>();
        }
    }
    -total.ln()
}

/// Per-frame argmax with lowest-index tie breaking.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let (frames, classes) = (logits.shape()[0], logits.shape()[1]);
    (0..frames)
        .map(|t| {
            let mut best = 0;
            for k in 1..classes {
                if logits.at(&[t, k]) > logits.at(&[t, best]) {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Levenshtein distance by memoized recursion on suffixes.
pub fn edit_distance_reference<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let sub = go(a, b, i + 1, j + 1, memo) + usize::from(a[i] != b[j]);
        let del = go(a, b, i + 1, j, memo) + 1;
        let ins = go(a, b, i, j + 1, memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

/// `|X_k|²`, `k = 0..=n/2`, of `frame` zero-padded to `n`, by the DFT sum.
pub fn dft_power(frame: &[f64], n: usize) -> Vec<f64> {
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Log mel energies computed from scratch with a direct DFT.
pub fn reference_log_mel(waveform: &[f64], cfg: &FeatureConfig) -> Tensor {
    let sr = cfg.sample_rate as f64;
    let win = (sr * cfg.window_ms / 1000.0).round() as usize;
    let hop = (sr * cfg.hop_ms / 1000.0).round() as usize;
    let frames = (waveform.len() - win) / hop + 1;
    let n = cfg.fft_size;
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let step = mel(sr / 2.0) / (cfg.n_mels + 1) as f64;
    let width = cfg.n_mels + usize::from(cfg.include_energy);
    let mut out = Tensor::zeros(&[width, frames]);
    for t in 0..frames {
        let raw = &waveform[t * hop..t * hop + win];
        let windowed: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(i, &s)| s * (0.54 - 0.46 * (2.0 * PI * i as f64 / (win - 1) as f64).cos()))
            .collect();
        let power = dft_power(&windowed, n);
        for m in 0..cfg.n_mels {
            let (lo, c, hi) = (hz(step * m as f64), hz(step * (m + 1) as f64), hz(step * (m + 2) as f64));
            let e: f64 = power
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let f = k as f64 * sr / n as f64;
                    let w = ((f - lo) / (c - lo)).min((hi - f) / (hi - c)).max(0.0);
                    w * p
                })
                .sum();
            out.set(&[m, t], e.max(cfg.log_floor).ln());
        }
        if cfg.include_energy {
            let e: f64 = raw.iter().map(|s| s * s).sum();
            out.set(&[cfg.n_mels, t], e.max(cfg.log_floor).ln());
        }
    }
    out
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Denominator floor for relative errors, so entries whose true gradient is
/// zero are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Compares the tape gradients of the scalar `f(inputs)` against central
/// differences with step `eps`, for every element of every input.
pub fn check_gradients(
    inputs: &[Tensor],
    eps: f64,
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<GradCheck> {
    let eval = |vals: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item().expect("scalar output"))
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0;
    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + eps;
            let up = eval(&probe)?;
            probe[i].data_mut()[j] = orig - eps;
            let down = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            max_rel_err = max_rel_err.max(rel);
            checked += 1;
        }
    }
    Ok(GradCheck { max_rel_err, checked })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_small_cases() {
        assert_eq!(edit_distance_reference(b"kitten", b"sitting"), 3);
        assert_eq!(edit_distance_reference::<u8>(b"", b"abc"), 3);
        assert_eq!(edit_distance_reference(b"abc", b"abc"), 0);
    }

    #[test]
    fn dft_of_impulse_is_flat() {
        let p = dft_power(&[1.0], 8);
        assert!(p.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn block_table_layout() {
        let w = QTensor::from_fn(&[1, 1], |_| crate::Quaternion::new(1.0, 2.0, 3.0, 4.0));
        let m = block_real_dense(&w);
        // Transposed because the dense form multiplies row vectors.
        let expect = [
            [1.0, -2.0, -3.0, -4.0],
            [2.0, 1.0, -4.0, 3.0],
            [3.0, 4.0, 1.0, -2.0],
            [4.0, -3.0, 2.0, 1.0],
        ];
        for (o, row) in expect.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                assert_eq!(m.at(&[i, o]), v);
            }
        }
    }
}
