//! Acoustic front end: log mel filterbank energies plus a frame energy term,
//! their first and second time derivatives, and packing of the three streams
//! into one pure quaternion per (band, frame).

mod delta;
mod file;
mod mel;
mod wav;

pub use delta::{delta, delta_delta};
pub use file::{decode_features, encode_features, read_features, write_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use mel::{hamming, hz_to_mel, log_mel_energies, mel_filterbank, mel_to_hz, power_spectrum};
pub use wav::{read_wav, write_wav};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::QTensor;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub fft_size: usize,
    /// Append the per-frame log energy as an extra band.
    pub include_energy: bool,
    /// Regression half-width of the delta filter.
    pub delta_window: usize,
    /// Energies are clamped to this value before the log.
    pub log_floor: f64,
    /// Per-utterance mean/variance normalization of each band and stream.
    pub normalize: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 16_000,
            window_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 40,
            fft_size: 512,
            include_energy: true,
            delta_window: 2,
            log_floor: 1e-10,
            normalize: false,
        }
    }
}

impl FeatureConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate as f64 * self.window_ms / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    /// Bands per frame: mel bands plus the optional energy term.
    pub fn width(&self) -> usize {
        self.n_mels + usize::from(self.include_energy)
    }

    pub fn n_frames(&self, n_samples: usize) -> Result<usize> {
        let win = self.window_samples();
        if n_samples < win {
            return Err(Error::TooShort { samples: n_samples, window: win });
        }
        Ok((n_samples - win) / self.hop_samples() + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let win = self.window_samples();
        if self.sample_rate == 0 {
            return Err(Error::config("sample_rate", "must be positive"));
        }
        if win < 2 {
            return Err(Error::config("window_ms", "window shorter than two samples"));
        }
        if self.hop_samples() == 0 {
            return Err(Error::config("hop_ms", "hop shorter than one sample"));
        }
        if self.fft_size < win {
            return Err(Error::config("fft_size", format!("{} is smaller than the {win}-sample window", self.fft_size)));
        }
        if self.n_mels == 0 {
            return Err(Error::config("n_mels", "must be positive"));
        }
        if self.delta_window == 0 {
            return Err(Error::config("delta_window", "must be positive"));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return Err(Error::config("log_floor", "must be positive"));
        }
        Ok(())
    }
}

/// Per-utterance features: a quaternion tensor of shape `(1, 1, width, frames)`
/// whose real plane is zero and whose i, j, k planes hold the static, delta
/// and delta-delta streams.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    q: QTensor,
}

impl FeatureSequence {
    /// Packs three `[width, frames]` streams.
    pub fn pack(stat: &Tensor, delta: &Tensor, ddelta: &Tensor) -> Result<Self> {
        let [width, frames] = crate::tensor::dims2("pack_quaternions", stat)?;
        for s in [delta, ddelta] {
            if s.shape() != stat.shape() {
                return Err(Error::shape(
                    "pack_quaternions",
                    format!("streams {:?} and {:?} differ", stat.shape(), s.shape()),
                ));
            }
        }
        let shape = [1, 1, width, frames];
        let q = QTensor::new(
            Tensor::zeros(&shape),
            stat.reshape(&shape)?,
            delta.reshape(&shape)?,
            ddelta.reshape(&shape)?,
        )?;
        Ok(FeatureSequence { q })
    }

    /// The static, delta and delta-delta streams as `[width, frames]`.
    pub fn unpack(&self) -> (Tensor, Tensor, Tensor) {
        let s = [self.width(), self.n_frames()];
        let m = |t: &Tensor| t.reshape(&s).expect("same element count");
        (m(&self.q.x), m(&self.q.y), m(&self.q.z))
    }

    pub fn quaternions(&self) -> &QTensor {
        &self.q
    }

    pub fn width(&self) -> usize {
        self.q.shape()[2]
    }

    pub fn n_frames(&self) -> usize {
        self.q.shape()[3]
    }

    /// Rounds every value to the nearest `f32`, the precision of feature files.
    pub fn quantize_f32(&mut self) {
        for p in [&mut self.q.x, &mut self.q.y, &mut self.q.z] {
            p.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

fn normalize_rows(m: &mut Tensor) {
    let frames = m.shape()[1];
    for row in m.data_mut().chunks_mut(frames) {
        let mean = row.iter().sum::<f64>() / frames as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames as f64;
        let sd = var.sqrt().max(1e-8);
        row.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

/// Waveform (samples in `[-1, 1)`) to packed quaternion features.
pub fn extract(waveform: &[f64], cfg: &FeatureConfig) -> Result<FeatureSequence> {
    let mut stat = log_mel_energies(waveform, cfg)?;
    let mut d1 = delta(&stat, cfg.delta_window)?;
    let mut d2 = delta(&d1, cfg.delta_window)?;
    if cfg.normalize {
        for m in [&mut stat, &mut d1, &mut d2] {
            normalize_rows(m);
        }
    }
    let mut seq = FeatureSequence::pack(&stat, &d1, &d2)?;
    seq.quantize_f32();
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    #[test]
    fn default_framing() {
        let cfg = FeatureConfig::default();
        assert_eq!(cfg.window_samples(), 400);
        assert_eq!(cfg.hop_samples(), 160);
        assert_eq!(cfg.width(), 41);
        assert_eq!(cfg.n_frames(16_000).unwrap(), 98);
        assert!(matches!(cfg.n_frames(399), Err(Error::TooShort { .. })));
    }

    #[test]
    fn one_second_utterance() {
        let cfg = FeatureConfig::default();
        let seq = extract(&noise(16_000, 1), &cfg).unwrap();
        assert_eq!(seq.n_frames(), 98);
        assert_eq!(seq.width(), 41);
        assert!(seq.quaternions().r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn silence_has_flat_derivatives() {
        let cfg = FeatureConfig::default();
        let seq = extract(&vec![0.0; 4000], &cfg).unwrap();
        let (s, d, dd) = seq.unpack();
        let floor = (cfg.log_floor.ln() as f32) as f64;
        assert!(s.data().iter().all(|&v| v == floor));
        assert!(d.data().iter().chain(dd.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn pack_round_trip_and_shape_errors() {
        let a = Tensor::from_fn(&[41, 6], |i| i as f64);
        let b = Tensor::from_fn(&[41, 6], |i| -(i as f64));
        let c = Tensor::from_fn(&[41, 6], |i| 0.5 * i as f64);
        let seq = FeatureSequence::pack(&a, &b, &c).unwrap();
        assert_eq!(seq.quaternions().shape(), &[1, 1, 41, 6]);
        assert_eq!(seq.unpack(), (a.clone(), b, c));
        assert!(FeatureSequence::pack(&a, &Tensor::zeros(&[41, 5]), &a).is_err());
        let zero = FeatureSequence::pack(&Tensor::zeros(&[41, 2]), &Tensor::zeros(&[41, 2]), &Tensor::zeros(&[41, 2])).unwrap();
        assert_eq!(zero.quaternions(), &QTensor::zeros(&[1, 1, 41, 2]));
    }

    #[test]
    fn extraction_is_deterministic() {
        let cfg = FeatureConfig::default();
        let w = noise(8000, 4);
        assert_eq!(extract(&w, &cfg).unwrap(), extract(&w, &cfg).unwrap());
    }

    #[test]
    fn normalization_centers_rows() {
        let cfg = FeatureConfig { normalize: true, ..FeatureConfig::default() };
        let seq = extract(&noise(8000, 7), &cfg).unwrap();
        let (s, _, _) = seq.unpack();
        let frames = seq.n_frames();
        for row in s.data().chunks(frames) {
            assert!((row.iter().sum::<f64>() / frames as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn config_validation() {
        assert!(FeatureConfig::default().validate().is_ok());
        let bad = FeatureConfig { fft_size: 256, ..FeatureConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
    }
}
