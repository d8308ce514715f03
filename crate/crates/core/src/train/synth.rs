//! A small synthetic task for smoke tests: each symbol is a Gaussian bump
//! in a distinct frequency band, utterances are short symbol strings
//! separated by silence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, Utterance};
use crate::error::Result;
use crate::features::{delta, FeatureSequence};
use crate::tensor::Tensor;

pub const TOY_SYMBOLS: [&str; 5] = ["a", "b", "c", "d", "e"];
pub const TOY_BANDS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySpec {
    pub utterances: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub min_symbols: usize,
    pub max_symbols: usize,
    pub noise: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec { utterances: 20, min_frames: 50, max_frames: 100, min_symbols: 3, max_symbols: 5, noise: 0.05 }
    }
}

pub fn toy_symbols() -> Vec<String> {
    TOY_SYMBOLS.iter().map(|s| s.to_string()).collect()
}

fn band_centre(symbol: usize) -> f64 {
    4.0 + 8.0 * symbol as f64
}

/// One utterance: static stream `[bands, frames]` and its labels.
fn toy_utterance(spec: &ToySpec, rng: &mut ChaCha8Rng) -> (Tensor, Vec<usize>) {
    let frames = rng.random_range(spec.min_frames..=spec.max_frames);
    let n = rng.random_range(spec.min_symbols..=spec.max_symbols);
    let mut labels: Vec<usize> = Vec::with_capacity(n);
    while labels.len() < n {
        let s = rng.random_range(0..TOY_SYMBOLS.len());
        if labels.last() != Some(&s) {
            labels.push(s);
        }
    }
    // Split the frames into n segments separated by n + 1 silences.
    let slot = frames / (2 * n + 1);
    let mut owner = vec![None; frames];
    for (k, &s) in labels.iter().enumerate() {
        let start = (2 * k + 1) * slot;
        for o in &mut owner[start..start + slot] {
            *o = Some(s);
        }
    }
    let noise = Normal::new(0.0, spec.noise).expect("valid sigma");
    let mut stat = Tensor::zeros(&[TOY_BANDS, frames]);
    for (t, who) in owner.iter().enumerate() {
        for b in 0..TOY_BANDS {
            let bump = who.map_or(0.0, |s| (-((b as f64 - band_centre(s)).powi(2)) / 4.0).exp());
            stat.set(&[b, t], bump + noise.sample(rng));
        }
    }
    (stat, labels)
}

pub fn toy_dataset(spec: &ToySpec, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut utterances = Vec::with_capacity(spec.utterances);
    for i in 0..spec.utterances {
        let (stat, labels) = toy_utterance(spec, &mut rng);
        let d1 = delta(&stat, 2)?;
        let d2 = delta(&d1, 2)?;
        let features = FeatureSequence::pack(&stat, &d1, &d2)?;
        utterances.push(Utterance { id: format!("toy{i:03}"), features, labels });
    }
    Ok(Dataset { utterances })
}
