use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::FeatureConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

pub fn hamming(len: usize) -> Vec<f64> {
    let denom = (len - 1) as f64;
    (0..len).map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos()).collect()
}

/// Triangular filters equally spaced on the mel scale between 0 Hz and
/// Nyquist, evaluated at the centre frequency of each FFT bin.
/// Shape `[n_mels, fft_size / 2 + 1]`.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32) -> Tensor {
    let n_bins = fft_size / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> =
        (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect();
    let mut fb = Tensor::zeros(&[n_mels, n_bins]);
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let w = if f > lo && f <= centre {
                (f - lo) / (centre - lo)
            } else if f > centre && f < hi {
                (hi - f) / (hi - centre)
            } else {
                0.0
            };
            fb.set(&[m, k], w);
        }
    }
    fb
}

/// `|X_k|²` for `k = 0..=fft_size/2` of a zero-padded frame.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Vec<f64> {
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let mut buf: Vec<Complex<f64>> = frame
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(fft_size)
        .collect();
    fft.process(&mut buf);
    buf[..fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Log mel filterbank energies, `[width, frames]`. With `include_energy` the
/// last row is the log of the raw frame energy `Σ s²`.
pub fn log_mel_energies(waveform: &[f64], cfg: &FeatureConfig) -> Result<Tensor> {
    cfg.validate()?;
    if waveform.is_empty() {
        return Err(Error::Audio("empty waveform".into()));
    }
    let frames = cfg.n_frames(waveform.len())?;
    let (win, hop) = (cfg.window_samples(), cfg.hop_samples());
    let window = hamming(win);
    let fb = mel_filterbank(cfg.n_mels, cfg.fft_size, cfg.sample_rate);
    let n_bins = cfg.fft_size / 2 + 1;
    let width = cfg.width();

    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut out = Tensor::zeros(&[width, frames]);
    let floor = cfg.log_floor;
    for t in 0..frames {
        let frame = &waveform[t * hop..t * hop + win];
        buf.fill(Complex::new(0.0, 0.0));
        for (b, (&s, &w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            b.re = s * w;
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        for m in 0..cfg.n_mels {
            let row = &fb.data()[m * n_bins..(m + 1) * n_bins];
            let e: f64 = row.iter().zip(&power).map(|(w, p)| w * p).sum();
            out.set(&[m, t], e.max(floor).ln());
        }
        if cfg.include_energy {
            let e: f64 = frame.iter().map(|s| s * s).sum();
            out.set(&[cfg.n_mels, t], e.max(floor).ln());
        }
    }
    Ok(out)
}
