use rand::Rng;

use super::qtensor::QVar;
use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Inverted-dropout mask: each entry is `0` with probability `rate`,
/// otherwise `1 / (1 - rate)`.
pub fn dropout_mask(shape: &[usize], rate: f64, rng: &mut impl Rng) -> Tensor {
    let keep = 1.0 / (1.0 - rate);
    Tensor::from_fn(shape, |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Drops whole quaternion units: one mask is drawn per unit and applied to
/// all four components. With `rng == None` (inference) or `rate == 0` this is
/// the identity.
pub fn quaternion_dropout(
    g: &mut Graph,
    input: QVar,
    rate: f64,
    rng: Option<&mut impl Rng>,
) -> Result<QVar> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config("dropout", format!("rate {rate} outside [0, 1)")));
    }
    let Some(rng) = rng else { return Ok(input) };
    if rate == 0.0 {
        return Ok(input);
    }
    let mask = dropout_mask(&input.shape(g), rate, rng);
    input.map(g, |g, v| g.mul_const(v, mask.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::QTensor;
    use crate::quaternion::Quaternion;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(shape: &[usize]) -> QTensor {
        QTensor::from_fn(shape, |i| Quaternion::new(1.0 + i as f64, 2.0, -3.0, 0.5))
    }

    #[test]
    fn identity_cases() {
        let q = input(&[2, 3, 4, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = Graph::new();
        let x = QVar::constant(&mut g, &q);
        let y = quaternion_dropout(&mut g, x, 0.0, Some(&mut rng)).unwrap();
        assert_eq!(y.value(&g), q);
        let y = quaternion_dropout(&mut g, x, 0.7, None::<&mut ChaCha8Rng>).unwrap();
        assert_eq!(y.value(&g), q);
    }

    #[test]
    fn mask_shared_across_components() {
        let q = input(&[1, 8, 16, 16]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut g = Graph::new();
        let x = QVar::constant(&mut g, &q);
        let y = quaternion_dropout(&mut g, x, 0.3, Some(&mut rng)).unwrap().value(&g);
        let mut dropped = 0;
        for i in 0..y.r.len() {
            let v = y.get_flat(i);
            if v.r == 0.0 {
                dropped += 1;
                assert_eq!(v, Quaternion::ZERO);
            } else {
                let expect = q.get_flat(i).scale(1.0 / 0.7);
                assert!((v - expect).norm() < 1e-12);
            }
        }
        assert!(dropped > 0);
    }

    #[test]
    fn rate_out_of_range() {
        let mut g = Graph::new();
        let x = QVar::constant(&mut g, &input(&[1, 1]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(quaternion_dropout(&mut g, x, 1.0, Some(&mut rng)).is_err());
    }
}
