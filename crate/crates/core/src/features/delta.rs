use crate::error::Result;
use crate::tensor::{dims2, Tensor};

/// Regression deltas along the time axis of a `[rows, frames]` stream:
/// `d_t = Σ_{n=1..N} n (c_{t+n} − c_{t−n}) / (2 Σ n²)`, with the first and
/// last frames replicated past the edges.
pub fn delta(stream: &Tensor, half_width: usize) -> Result<Tensor> {
    let [rows, frames] = dims2("delta", stream)?;
    let denom = 2.0 * (1..=half_width).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Tensor::zeros(&[rows, frames]);
    if frames == 0 {
        return Ok(out);
    }
    let last = frames as isize - 1;
    for r in 0..rows {
        let row = &stream.data()[r * frames..(r + 1) * frames];
        let at = |t: isize| row[t.clamp(0, last) as usize];
        for t in 0..frames as isize {
            let num: f64 = (1..=half_width as isize).map(|n| n as f64 * (at(t + n) - at(t - n))).sum();
            out.data_mut()[r * frames + t as usize] = num / denom;
        }
    }
    Ok(out)
}

pub fn delta_delta(stream: &Tensor, half_width: usize) -> Result<Tensor> {
    delta(&delta(stream, half_width)?, half_width)
}
