use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::quaternion::Quaternion;
use crate::tensor::Tensor;

/// Quaternion tensor stored as four aligned real planes.
///
/// Convolutional activations use the logical shape
/// `(batch, q_channels, freq, time)`; dense activations use `(rows, q_units)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    pub r: Tensor,
    pub x: Tensor,
    pub y: Tensor,
    pub z: Tensor,
}

impl QTensor {
    pub fn new(r: Tensor, x: Tensor, y: Tensor, z: Tensor) -> Result<Self> {
        for p in [&x, &y, &z] {
            if p.shape() != r.shape() {
                return Err(Error::shape(
                    "QTensor::new",
                    format!("component planes {:?} and {:?} differ", r.shape(), p.shape()),
                ));
            }
        }
        Ok(QTensor { r, x, y, z })
    }

    pub fn from_planes(planes: [Tensor; 4]) -> Result<Self> {
        let [r, x, y, z] = planes;
        QTensor::new(r, x, y, z)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        QTensor {
            r: Tensor::zeros(shape),
            x: Tensor::zeros(shape),
            y: Tensor::zeros(shape),
            z: Tensor::zeros(shape),
        }
    }

    /// Builds a tensor from one quaternion per flat index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> Quaternion) -> Self {
        let qs: Vec<Quaternion> = (0..shape.iter().product()).map(&mut f).collect();
        let plane = |c: usize| Tensor::from_fn(shape, |i| qs[i].to_array()[c]);
        QTensor { r: plane(0), x: plane(1), y: plane(2), z: plane(3) }
    }

    pub fn shape(&self) -> &[usize] {
        self.r.shape()
    }

    /// Number of quaternion channels (axis 1).
    pub fn q_channels(&self) -> usize {
        self.shape().get(1).copied().unwrap_or(0)
    }

    /// Channel count of the equivalent real-valued tensor.
    pub fn real_channels(&self) -> usize {
        4 * self.q_channels()
    }

    pub fn planes(&self) -> [&Tensor; 4] {
        [&self.r, &self.x, &self.y, &self.z]
    }

    pub fn into_planes(self) -> [Tensor; 4] {
        [self.r, self.x, self.y, self.z]
    }

    pub fn get(&self, index: &[usize]) -> Quaternion {
        let off = self.r.offset(index);
        self.get_flat(off)
    }

    pub fn get_flat(&self, i: usize) -> Quaternion {
        Quaternion::new(self.r.data()[i], self.x.data()[i], self.y.data()[i], self.z.data()[i])
    }

    pub fn max_abs_diff(&self, other: &QTensor) -> f64 {
        self.planes()
            .iter()
            .zip(other.planes())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Graph handles for the four planes of a quaternion activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QVar {
    pub r: Var,
    pub x: Var,
    pub y: Var,
    pub z: Var,
}

impl QVar {
    pub fn from_planes([r, x, y, z]: [Var; 4]) -> Self {
        QVar { r, x, y, z }
    }

    pub fn planes(&self) -> [Var; 4] {
        [self.r, self.x, self.y, self.z]
    }

    pub fn constant(g: &mut Graph, q: &QTensor) -> Self {
        QVar::from_planes(q.planes().map(|p| g.constant(p.clone())))
    }

    pub fn leaf(g: &mut Graph, q: &QTensor) -> Self {
        QVar::from_planes(q.planes().map(|p| g.leaf(p.clone())))
    }

    pub fn shape(self, g: &Graph) -> Vec<usize> {
        g.shape(self.r).to_vec()
    }

    pub fn value(self, g: &Graph) -> QTensor {
        QTensor {
            r: g.value(self.r).clone(),
            x: g.value(self.x).clone(),
            y: g.value(self.y).clone(),
            z: g.value(self.z).clone(),
        }
    }

    /// Applies `f` to each plane independently.
    pub fn map(self, g: &mut Graph, mut f: impl FnMut(&mut Graph, Var) -> Result<Var>) -> Result<QVar> {
        Ok(QVar { r: f(g, self.r)?, x: f(g, self.x)?, y: f(g, self.y)?, z: f(g, self.z)? })
    }
}
