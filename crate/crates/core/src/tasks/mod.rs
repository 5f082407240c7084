//! Datasets and task definitions: synthetic regression, two moons, MNIST
//! ingestion and the logistic-growth PINN.

mod data;
mod metric;
mod mnist;
mod pinn;

pub use data::{bessel_j0, gen_moons, moon_point, gen_regression, RegressionTask};
pub use metric::{accuracy, metric, mse_vs_analytic, rmse, MetricKind};
pub use mnist::{load_mnist_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels};
pub use pinn::{logistic_solution, pinn_loss, PinnProblem};

use thiserror::Error;

use crate::layers::LayerError;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed IDX data at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Values(Tensor),
    Classes(Vec<usize>),
}

/// Inputs `[n, d]` with matching regression targets or class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Tensor,
    pub targets: Targets,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor, targets: Targets, split: Split) -> Result<Self, TaskError> {
        if inputs.rank() != 2 {
            return Err(TaskError::Shape(format!("inputs must be [n, d], got {:?}", inputs.shape())));
        }
        let n = inputs.shape()[0];
        let rows = match &targets {
            Targets::Values(t) => {
                if t.rank() != 2 {
                    return Err(TaskError::Shape(format!("targets must be [n, d'], got {:?}", t.shape())));
                }
                t.shape()[0]
            }
            Targets::Classes(c) => c.len(),
        };
        if rows != n {
            return Err(TaskError::Shape(format!("{n} inputs but {rows} targets")));
        }
        Ok(Dataset { inputs, targets, split })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_in(&self) -> usize {
        self.inputs.shape()[1]
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        let d = self.d_in();
        let inputs = Tensor::new(
            vec![range.len(), d],
            self.inputs.values()[range.start * d..range.end * d].to_vec(),
        )
        .expect("slice of valid dataset");
        let targets = match &self.targets {
            Targets::Values(t) => {
                let w = t.shape()[1];
                Targets::Values(
                    Tensor::new(vec![range.len(), w], t.values()[range.start * w..range.end * w].to_vec())
                        .expect("slice of valid dataset"),
                )
            }
            Targets::Classes(c) => Targets::Classes(c[range].to_vec()),
        };
        Dataset {
            inputs,
            targets,
            split: self.split,
        }
    }

    /// Copy with every input multiplied by `a` and shifted by `b`.
    pub fn affine_inputs(&self, a: f64, b: f64) -> Dataset {
        let mut out = self.clone();
        out.inputs.values_mut().iter_mut().for_each(|v| *v = a * *v + b);
        out
    }
}
