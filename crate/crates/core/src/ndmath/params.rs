use crate::error::{shape_err, Error, Result};

use super::{LayerNorm, Linear, Matrix};

/// Borrowed view of one named parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: &'a [f64],
}

/// Owned tensor as stored in a checkpoint (`f32` payload).
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// A bundle of learnable tensors with a stable order.
///
/// `tensors` and `tensors_mut` must list the same tensors in the same order;
/// the optimizer and the checkpoint writer both rely on it.
pub trait ParamSet: Clone + Send + Sync {
    fn tensors(&self) -> Vec<TensorRef<'_>>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Same shapes, every entry zero. Gradients use this as their container.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn to_store(&self) -> TensorStore {
        TensorStore {
            tensors: self
                .tensors()
                .into_iter()
                .map(|t| NamedTensor {
                    name: t.name,
                    dims: t.dims,
                    data: t.data.iter().map(|&v| v as f32).collect(),
                })
                .collect(),
        }
    }
}

pub(crate) fn push_linear<'a>(out: &mut Vec<TensorRef<'a>>, prefix: &str, lin: &'a Linear) {
    out.push(TensorRef {
        name: format!("{prefix}.weight"),
        dims: vec![lin.input_dim(), lin.output_dim()],
        data: lin.weight.as_slice(),
    });
    out.push(TensorRef { name: format!("{prefix}.bias"), dims: vec![lin.bias.len()], data: &lin.bias });
}

pub(crate) fn push_linear_mut<'a>(out: &mut Vec<&'a mut [f64]>, lin: &'a mut Linear) {
    out.push(lin.weight.as_mut_slice());
    out.push(&mut lin.bias);
}

pub(crate) fn push_ln<'a>(out: &mut Vec<TensorRef<'a>>, prefix: &str, ln: &'a LayerNorm) {
    out.push(TensorRef { name: format!("{prefix}.gain"), dims: vec![ln.dim()], data: &ln.gain });
    out.push(TensorRef { name: format!("{prefix}.bias"), dims: vec![ln.dim()], data: &ln.bias });
}

pub(crate) fn push_ln_mut<'a>(out: &mut Vec<&'a mut [f64]>, ln: &'a mut LayerNorm) {
    out.push(&mut ln.gain);
    out.push(&mut ln.bias);
}

/// Ordered collection of checkpoint tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorStore {
    pub tensors: Vec<NamedTensor>,
}

impl TensorStore {
    pub fn get(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|t| t.name.as_str())
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let t = self.get(name)?;
        if t.dims.len() != 1 {
            return Err(shape_err!("{name} has rank {}, expected 1", t.dims.len()));
        }
        Ok(t.data.iter().map(|&v| v as f64).collect())
    }

    pub(crate) fn linear(&self, prefix: &str) -> Result<Linear> {
        let w = self.get(&format!("{prefix}.weight"))?;
        if w.dims.len() != 2 {
            return Err(shape_err!("{prefix}.weight has rank {}", w.dims.len()));
        }
        let weight = Matrix::new(w.dims[0], w.dims[1], w.data.iter().map(|&v| v as f64).collect())?;
        let bias = self.vector(&format!("{prefix}.bias"))?;
        if bias.len() != weight.cols() {
            return Err(shape_err!("{prefix}.bias length {} for {} outputs", bias.len(), weight.cols()));
        }
        Ok(Linear { weight, bias })
    }

    pub(crate) fn layer_norm(&self, prefix: &str) -> Result<LayerNorm> {
        let gain = self.vector(&format!("{prefix}.gain"))?;
        let bias = self.vector(&format!("{prefix}.bias"))?;
        if gain.len() != bias.len() {
            return Err(shape_err!("{prefix} gain/bias lengths differ"));
        }
        let mut ln = LayerNorm::new(gain.len());
        ln.gain = gain;
        ln.bias = bias;
        Ok(ln)
    }
}
