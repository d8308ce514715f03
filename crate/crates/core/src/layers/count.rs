//! Closed-form weight counts for paired real / quaternion layers.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algebra {
    Real,
    Quaternion,
}

/// Layer geometry in units of the algebra it is counted for: real neurons
/// for [`Algebra::Real`], quaternion neurons otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    Conv { in_ch: usize, out_ch: usize, kh: usize, kw: usize },
    Dense { inputs: usize, outputs: usize },
}

impl LayerShape {
    /// Trainable real scalars in the weights (biases excluded).
    pub fn weight_count(&self, algebra: Algebra) -> usize {
        let per_connection = match algebra {
            Algebra::Real => 1,
            Algebra::Quaternion => 4,
        };
        let connections = match *self {
            LayerShape::Conv { in_ch, out_ch, kh, kw } => in_ch * out_ch * kh * kw,
            LayerShape::Dense { inputs, outputs } => inputs * outputs,
        };
        per_connection * connections
    }

    /// Real scalars in the bias: one per output neuron, four for quaternions.
    pub fn bias_count(&self, algebra: Algebra) -> usize {
        let outputs = match *self {
            LayerShape::Conv { out_ch, .. } => out_ch,
            LayerShape::Dense { outputs, .. } => outputs,
        };
        match algebra {
            Algebra::Real => outputs,
            Algebra::Quaternion => 4 * outputs,
        }
    }

    /// The real layer with the same real-equivalent widths (4× each side).
    pub fn real_equivalent(&self) -> LayerShape {
        match *self {
            LayerShape::Conv { in_ch, out_ch, kh, kw } => {
                LayerShape::Conv { in_ch: 4 * in_ch, out_ch: 4 * out_ch, kh, kw }
            }
            LayerShape::Dense { inputs, outputs } => {
                LayerShape::Dense { inputs: 4 * inputs, outputs: 4 * outputs }
            }
        }
    }
}
