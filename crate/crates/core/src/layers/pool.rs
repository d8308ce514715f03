use super::qtensor::QVar;
use crate::autodiff::Graph;
use crate::error::Result;

const FREQ_AXIS: usize = 2;

/// Component-wise max over non-overlapping frequency windows of
/// `(batch, q_channels, freq, time)` activations. The time axis is left
/// alone and a ragged frequency tail is dropped.
pub fn split_maxpool_freq(g: &mut Graph, input: QVar, pool_width: usize) -> Result<QVar> {
    input.map(g, |g, v| g.max_pool(v, FREQ_AXIS, pool_width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::QTensor;
    use crate::quaternion::Quaternion;

    #[test]
    fn width_one_is_identity() {
        let mut g = Graph::new();
        let q = QTensor::from_fn(&[1, 2, 5, 3], |i| Quaternion::new(i as f64, -(i as f64), 1.0, 0.0));
        let x = QVar::constant(&mut g, &q);
        assert_eq!(split_maxpool_freq(&mut g, x, 1).unwrap().value(&g), q);
    }

    #[test]
    fn constant_plane_shrinks_frequency_only() {
        let mut g = Graph::new();
        let q = QTensor::from_fn(&[2, 3, 41, 7], |_| Quaternion::new(0.5, -1.0, 2.0, 3.0));
        let x = QVar::constant(&mut g, &q);
        let y = split_maxpool_freq(&mut g, x, 3).unwrap().value(&g);
        assert_eq!(y.shape(), &[2, 3, 13, 7]);
        assert!((0..y.r.len()).all(|i| y.get_flat(i) == Quaternion::new(0.5, -1.0, 2.0, 3.0)));
    }

    #[test]
    fn zero_width_rejected() {
        let mut g = Graph::new();
        let x = QVar::constant(&mut g, &QTensor::zeros(&[1, 1, 4, 4]));
        assert!(split_maxpool_freq(&mut g, x, 0).is_err());
    }
}
