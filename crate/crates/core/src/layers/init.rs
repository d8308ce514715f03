//! Polar quaternion weight initialization.
//!
//! Each weight is `φ (cos θ + u sin θ)`, where `u` is a random unit pure
//! quaternion obtained by normalizing a draw with imaginary components
//! uniform in `[0, 1]`, `θ ~ U[-π, π]`, and `φ = σ · χ₄` with `χ₄` a
//! Chi-distributed magnitude with four degrees of freedom. Hence
//! `E|W|² = 4σ²`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use super::qtensor::QTensor;
use crate::error::{Error, Result};
use crate::quaternion::Quaternion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitCriterion {
    #[default]
    He,
    Glorot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub criterion: InitCriterion,
    /// Fan-in in quaternion units times receptive-field size.
    pub n_in: usize,
    pub n_out: usize,
}

impl InitSpec {
    pub fn he(n_in: usize) -> Self {
        InitSpec { criterion: InitCriterion::He, n_in, n_out: n_in }
    }

    pub fn new(criterion: InitCriterion, n_in: usize, n_out: usize) -> Self {
        InitSpec { criterion, n_in, n_out }
    }

    pub fn sigma(&self) -> f64 {
        match self.criterion {
            InitCriterion::He => 1.0 / (2.0 * self.n_in as f64).sqrt(),
            InitCriterion::Glorot => 1.0 / (2.0 * (self.n_in + self.n_out) as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_in == 0 {
            return Err(Error::config("n_in", "fan-in must be at least 1"));
        }
        if self.criterion == InitCriterion::Glorot && self.n_out == 0 {
            return Err(Error::config("n_out", "fan-out must be at least 1"));
        }
        Ok(())
    }
}

/// The random pieces of one polar weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarDraw {
    pub magnitude: f64,
    pub theta: f64,
    /// Unit pure quaternion.
    pub axis: Quaternion,
}

impl PolarDraw {
    pub fn sample(spec: &InitSpec, chi: &ChiSquared<f64>, rng: &mut impl Rng) -> Self {
        let axis = loop {
            let q = Quaternion::new(0.0, rng.random(), rng.random(), rng.random());
            if let Ok(u) = q.unit() {
                break u;
            }
        };
        let theta = rng.random_range(-PI..=PI);
        let magnitude = spec.sigma() * chi.sample(rng).sqrt();
        PolarDraw { magnitude, theta, axis }
    }

    pub fn weight(&self) -> Quaternion {
        let (s, c) = self.theta.sin_cos();
        Quaternion::new(
            self.magnitude * c,
            self.magnitude * self.axis.x * s,
            self.magnitude * self.axis.y * s,
            self.magnitude * self.axis.z * s,
        )
    }
}

/// Draws a quaternion weight tensor of the given shape.
pub fn quaternion_init(spec: &InitSpec, shape: &[usize], rng: &mut impl Rng) -> Result<QTensor> {
    spec.validate()?;
    let chi = ChiSquared::new(4.0).expect("4 degrees of freedom");
    Ok(QTensor::from_fn(shape, |_| PolarDraw::sample(spec, &chi, rng).weight()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigma_per_criterion() {
        assert_eq!(InitSpec::he(128).sigma(), 1.0 / 256f64.sqrt());
        assert_eq!(InitSpec::new(InitCriterion::Glorot, 10, 22).sigma(), 1.0 / 64f64.sqrt());
    }

    #[test]
    fn zero_theta_gives_real_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let chi = ChiSquared::new(4.0).unwrap();
        let mut d = PolarDraw::sample(&InitSpec::he(16), &chi, &mut rng);
        d.theta = 0.0;
        let w = d.weight();
        assert_eq!((w.x, w.y, w.z), (0.0, 0.0, 0.0));
        assert_eq!(w.r, d.magnitude);
    }

    #[test]
    fn imaginary_direction_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let chi = ChiSquared::new(4.0).unwrap();
        for _ in 0..1000 {
            let d = PolarDraw::sample(&InitSpec::he(16), &chi, &mut rng);
            let w = d.weight();
            let scale = d.magnitude * d.theta.sin();
            if scale.abs() < 1e-9 {
                continue;
            }
            let u = Quaternion::new(0.0, w.x / scale, w.y / scale, w.z / scale);
            assert!((u.norm() - 1.0).abs() < 1e-9);
            assert!(u.x >= 0.0 && u.y >= 0.0 && u.z >= 0.0);
            assert!((w.norm() - d.magnitude).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_fan_in_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(quaternion_init(&InitSpec::he(0), &[2, 2], &mut rng).is_err());
    }

    #[test]
    fn seeded_draws_repeat() {
        let a = quaternion_init(&InitSpec::he(8), &[4, 4], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = quaternion_init(&InitSpec::he(8), &[4, 4], &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }
}
