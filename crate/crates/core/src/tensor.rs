//! Dense row-major `f64` tensors and the raw kernels behind the autodiff ops.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} holds {expected} values, got {}", data.len()),
            ));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut off = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            debug_assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
            off = off * n + i;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        ensure_same_shape(op, self, other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &Tensor, s: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn transpose2(&self) -> Result<Tensor> {
        let [m, n] = dims2("transpose", self)?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(&[n, m], out)
    }
}

pub(crate) fn ensure_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape, b.shape)));
    }
    Ok(())
}

pub(crate) fn dims2(op: &'static str, t: &Tensor) -> Result<[usize; 2]> {
    match *t.shape() {
        [m, n] => Ok([m, n]),
        ref s => Err(Error::shape(op, format!("expected a matrix, got shape {s:?}"))),
    }
}

pub(crate) fn dims4(op: &'static str, t: &Tensor) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => Err(Error::shape(op, format!("expected 4 axes, got shape {s:?}"))),
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner) block sizes.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `c[m×n] += a[m×k] · b[k×n]`, all row-major.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`.
pub(crate) fn gemm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            c[i * n + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`.
pub(crate) fn gemm_tn_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [m, k] = dims2("matmul", a)?;
    let [k2, n] = dims2("matmul", b)?;
    if k != k2 {
        return Err(Error::shape("matmul", format!("inner dimensions {k} and {k2} differ")));
    }
    let mut out = vec![0.0; m * n];
    gemm_acc(a.data(), b.data(), &mut out, m, k, n);
    Tensor::new(&[m, n], out)
}

/// Stride and zero padding of a 2-D cross-correlation, per spatial axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2dGeometry {
    pub fn new(stride: (usize, usize), padding: (usize, usize)) -> Self {
        Conv2dGeometry { stride, padding }
    }

    /// Unit stride with padding that keeps odd-sized kernels shape-preserving.
    pub fn same(kh: usize, kw: usize) -> Self {
        Conv2dGeometry { stride: (1, 1), padding: (kh / 2, kw / 2) }
    }

    pub fn output_size(&self, h: usize, w: usize, kh: usize, kw: usize) -> Result<(usize, usize)> {
        let (sh, sw) = self.stride;
        if sh == 0 || sw == 0 {
            return Err(Error::geometry("conv2d", "stride must be positive"));
        }
        let ph = h + 2 * self.padding.0;
        let pw = w + 2 * self.padding.1;
        if ph < kh || pw < kw || kh == 0 || kw == 0 {
            return Err(Error::geometry(
                "conv2d",
                format!("padded input {ph}×{pw} smaller than kernel {kh}×{kw}"),
            ));
        }
        Ok(((ph - kh) / sh + 1, (pw - kw) / sw + 1))
    }
}

impl Default for Conv2dGeometry {
    fn default() -> Self {
        Conv2dGeometry { stride: (1, 1), padding: (0, 0) }
    }
}

struct ConvDims {
    batch: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn conv_dims(input: &Tensor, kernel: &Tensor, geom: &Conv2dGeometry) -> Result<ConvDims> {
    let [batch, cin, h, w] = dims4("conv2d", input)?;
    let [cout, kcin, kh, kw] = dims4("conv2d", kernel)?;
    if cin != kcin {
        return Err(Error::shape(
            "conv2d",
            format!("input has {cin} channels, kernel expects {kcin}"),
        ));
    }
    let (oh, ow) = geom.output_size(h, w, kh, kw)?;
    Ok(ConvDims { batch, cin, h, w, cout, kh, kw, oh, ow })
}

/// Unrolls one image `[cin, h, w]` into columns `[cin·kh·kw, oh·ow]`.
fn im2col(img: &[f64], d: &ConvDims, geom: &Conv2dGeometry, cols: &mut [f64]) {
    let (sh, sw) = geom.stride;
    let (ph, pw) = geom.padding;
    let npix = d.oh * d.ow;
    for c in 0..d.cin {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let dst = &mut cols[row * npix..(row + 1) * npix];
                for oi in 0..d.oh {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    let line = &mut dst[oi * d.ow..(oi + 1) * d.ow];
                    if ii < 0 || ii >= d.h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &img[(c * d.h + ii as usize) * d.w..(c * d.h + ii as usize + 1) * d.w];
                    for (oj, v) in line.iter_mut().enumerate() {
                        let jj = (oj * sw + kj) as isize - pw as isize;
                        *v = if jj < 0 || jj >= d.w as isize { 0.0 } else { src[jj as usize] };
                    }
                }
            }
        }
    }
}

fn col2im_acc(cols: &[f64], d: &ConvDims, geom: &Conv2dGeometry, img: &mut [f64]) {
    let (sh, sw) = geom.stride;
    let (ph, pw) = geom.padding;
    let npix = d.oh * d.ow;
    for c in 0..d.cin {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (c * d.kh + ki) * d.kw + kj;
                let src = &cols[row * npix..(row + 1) * npix];
                for oi in 0..d.oh {
                    let ii = (oi * sh + ki) as isize - ph as isize;
                    if ii < 0 || ii >= d.h as isize {
                        continue;
                    }
                    let base = (c * d.h + ii as usize) * d.w;
                    for oj in 0..d.ow {
                        let jj = (oj * sw + kj) as isize - pw as isize;
                        if jj >= 0 && (jj as usize) < d.w {
                            img[base + jj as usize] += src[oi * d.ow + oj];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation (no kernel flip) of `[batch, cin, h, w]` with
/// `[cout, cin, kh, kw]`, zero padded.
pub fn conv2d(input: &Tensor, kernel: &Tensor, geom: Conv2dGeometry) -> Result<Tensor> {
    let d = conv_dims(input, kernel, &geom)?;
    let krows = d.cin * d.kh * d.kw;
    let npix = d.oh * d.ow;
    let mut cols = vec![0.0; krows * npix];
    let mut out = vec![0.0; d.batch * d.cout * npix];
    let img_len = d.cin * d.h * d.w;
    for b in 0..d.batch {
        im2col(&input.data()[b * img_len..(b + 1) * img_len], &d, &geom, &mut cols);
        let dst = &mut out[b * d.cout * npix..(b + 1) * d.cout * npix];
        gemm_acc(kernel.data(), &cols, dst, d.cout, krows, npix);
    }
    Tensor::new(&[d.batch, d.cout, d.oh, d.ow], out)
}

/// Gradients of [`conv2d`] with respect to the input and the kernel.
pub(crate) fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    geom: Conv2dGeometry,
    grad_out: &Tensor,
    want_input: bool,
    want_kernel: bool,
) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let d = conv_dims(input, kernel, &geom)?;
    let krows = d.cin * d.kh * d.kw;
    let npix = d.oh * d.ow;
    let img_len = d.cin * d.h * d.w;
    let mut cols = vec![0.0; krows * npix];
    let mut gk = want_kernel.then(|| vec![0.0; kernel.len()]);
    let mut gi = want_input.then(|| vec![0.0; input.len()]);
    for b in 0..d.batch {
        let go = &grad_out.data()[b * d.cout * npix..(b + 1) * d.cout * npix];
        if let Some(gk) = gk.as_mut() {
            im2col(&input.data()[b * img_len..(b + 1) * img_len], &d, &geom, &mut cols);
            gemm_nt_acc(go, &cols, gk, d.cout, npix, krows);
        }
        if let Some(gi) = gi.as_mut() {
            cols.fill(0.0);
            gemm_tn_acc(kernel.data(), go, &mut cols, krows, d.cout, npix);
            col2im_acc(&cols, &d, &geom, &mut gi[b * img_len..(b + 1) * img_len]);
        }
    }
    Ok((
        gi.map(|v| Tensor::new(input.shape(), v)).transpose()?,
        gk.map(|v| Tensor::new(kernel.shape(), v)).transpose()?,
    ))
}
