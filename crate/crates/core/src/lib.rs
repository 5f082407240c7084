//! Matrix-form B-spline evaluation, bounded and unbounded KAN layers, a
//! reverse-mode tensor engine with a forward tangent channel, optimizers and
//! the synthetic tasks used to train them.

pub mod bspline;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tasks;
pub mod tensor;

pub use bspline::{basis_matrix, BasisMatrix, SplineError};
pub use layers::{
    init_layer, kan_forward, naive_kan_forward, ukan_forward, AnyLayer, BoundedGrid, KanLayer, Layer,
    LayerConfig, LayerError, UkanConfig, UkanLayer,
};
pub use model::{Model, ModelKind};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, LrSchedule, OptimError};
pub use tasks::{Dataset, Split, TaskError, Targets};
pub use tensor::{Gradients, Tape, Tensor, TensorError};

use thiserror::Error;

/// Any error raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Task(#[from] TaskError),
}
