//! Dense `f64` tensors with a recorded reverse-mode tape and a single
//! forward-tangent channel.
//!
//! A [`Tensor`] optionally carries a node handle on a [`Tape`]; operations
//! that touch at least one recorded input are themselves recorded. A tensor
//! may also carry a tangent (directional derivative with respect to a seeded
//! input). Tangents are computed with ordinary recorded operations, so a loss
//! that depends on tangent outputs is differentiated by the same backward
//! sweep (forward-over-reverse).

mod ops;
mod tape;

use std::fmt;
use std::sync::Arc;

pub use ops::{Elementwise, LossKind, LossTarget};
pub use tape::{BackwardOp, Gradients, NodeId, Tape};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("index {index} out of range for extent {extent}")]
    Index { index: usize, extent: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

impl TensorError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Dimension {
            op,
            detail: detail.into(),
        }
    }
}

/// Row-major dense tensor of 64-bit floats.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    tangent: Option<Box<Tensor>>,
    node: Option<NodeId>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self, TensorError> {
        let shape = shape.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::dim(
                "new",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self::from_parts(shape, Arc::new(data)))
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Arc<Vec<f64>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data,
            tangent: None,
            node: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Vec::new(), Arc::new(vec![value]))
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = shape.iter().product();
        Self::from_parts(shape, Arc::new(vec![value; n]))
    }

    /// Builds a `[rows.len(), width]` matrix. All rows must share one width.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TensorError> {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(TensorError::dim("from_rows", "ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![rows.len(), width], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn shared_values(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }

    /// Mutable access to the values. Detaches the tensor from any tape node,
    /// since the recorded value no longer matches.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.node = None;
        self.tangent = None;
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<f64, TensorError> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    pub fn get2(&self, row: usize, col: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let width = self.shape[1..].iter().product::<usize>();
        &self.data[row * width..(row + 1) * width]
    }

    pub fn tangent(&self) -> Option<&Tensor> {
        self.tangent.as_deref()
    }

    pub fn node(&self) -> Option<NodeId> {
        self.node
    }

    pub fn is_recorded(&self) -> bool {
        self.node.is_some()
    }

    /// Copy without tape node or tangent.
    pub fn detach(&self) -> Tensor {
        Tensor::from_parts(self.shape.clone(), Arc::clone(&self.data))
    }

    pub(crate) fn without_tangent(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::clone(&self.data),
            tangent: None,
            node: self.node,
        }
    }

    pub(crate) fn set_tangent(&mut self, tangent: Option<Tensor>) {
        debug_assert!(tangent.as_ref().is_none_or(|t| t.shape == self.shape));
        self.tangent = tangent.map(|t| Box::new(t.without_tangent()));
    }

    pub(crate) fn set_node(&mut self, node: Option<NodeId>) {
        self.node = node;
    }

    /// Reinterprets the value buffer under a new shape of equal size.
    /// Untracked; use [`Tape::reshape`] for recorded tensors.
    pub fn reshaped(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor, TensorError> {
        let shape = shape.into();
        if shape.iter().product::<usize>() != self.len() {
            return Err(TensorError::dim(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        Ok(Tensor::from_parts(shape, Arc::clone(&self.data)))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bytes held by the value buffer.
    pub fn nbytes(&self) -> usize {
        self.data.len() * std::mem::size_of::<f64>()
    }
}

/// Equal shapes, values and tangents. Tape membership is ignored.
impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data && self.tangent == other.tangent
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.shape);
        if self.data.len() <= 16 {
            s.field("values", &self.data);
        } else {
            s.field("values", &format_args!("[{} values]", self.data.len()));
        }
        if let Some(node) = self.node {
            s.field("node", &node);
        }
        if let Some(t) = &self.tangent {
            s.field("tangent", &t.values());
        }
        s.finish()
    }
}
