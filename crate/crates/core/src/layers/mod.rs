//! Bounded KAN, unbounded KAN and linear layers.

mod kan;
mod kernel;
mod linear;
mod naive;
mod ukan;

pub use kan::{kan_forward, BoundedGrid, KanLayer};
pub use linear::LinearLayer;
pub use naive::{naive_basis_bytes, naive_kan_forward};
pub use ukan::{positional_encoding, select_window, ukan_forward, GroupId, UkanConfig, UkanLayer};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::bspline::SplineError;
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum LayerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index {index} out of range for extent {extent}")]
    Index { index: usize, extent: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("out of memory allocating {bytes} bytes")]
    OutOfMemory { bytes: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// A differentiable map `[batch, d_in] → [batch, d_out]` with named
/// parameters.
pub trait Layer {
    fn d_in(&self) -> usize;
    fn d_out(&self) -> usize;
    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError>;
    fn parameters(&self) -> Vec<(&'static str, &Tensor)>;
    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut Tensor)>;
}

pub(crate) fn normal_tensor(shape: Vec<usize>, std: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("standard deviation is finite and non-negative");
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape, data).expect("length matches shape")
}

/// Layer family plus its family-specific settings.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerConfig {
    Kan {
        degree: usize,
        grid: BoundedGrid,
        base_branch: bool,
    },
    Ukan(UkanConfig),
    Linear,
}

/// Any of the supported layers behind one type.
#[derive(Debug, Clone)]
pub enum AnyLayer {
    Kan(KanLayer),
    Ukan(UkanLayer),
    Linear(LinearLayer),
}

impl AnyLayer {
    fn inner(&self) -> &dyn Layer {
        match self {
            AnyLayer::Kan(l) => l,
            AnyLayer::Ukan(l) => l,
            AnyLayer::Linear(l) => l,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Layer {
        match self {
            AnyLayer::Kan(l) => l,
            AnyLayer::Ukan(l) => l,
            AnyLayer::Linear(l) => l,
        }
    }
}

impl Layer for AnyLayer {
    fn d_in(&self) -> usize {
        self.inner().d_in()
    }

    fn d_out(&self) -> usize {
        self.inner().d_out()
    }

    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
        self.inner().forward(tape, x)
    }

    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        self.inner().parameters()
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        self.inner_mut().parameters_mut()
    }
}

/// Randomly initialised layer drawing from a caller-owned generator.
pub fn init_layer_with_rng(
    config: &LayerConfig,
    d_in: usize,
    d_out: usize,
    rng: &mut impl Rng,
) -> Result<AnyLayer, LayerError> {
    Ok(match config {
        LayerConfig::Kan {
            degree,
            grid,
            base_branch,
        } => AnyLayer::Kan(KanLayer::init(d_in, d_out, *degree, *grid, *base_branch, rng)?),
        LayerConfig::Ukan(c) => AnyLayer::Ukan(UkanLayer::init(d_in, d_out, c, rng)?),
        LayerConfig::Linear => AnyLayer::Linear(LinearLayer::init(d_in, d_out, rng)?),
    })
}

/// Randomly initialised layer; identical seeds give bitwise-identical
/// parameters.
pub fn init_layer(
    config: &LayerConfig,
    d_in: usize,
    d_out: usize,
    seed: u64,
) -> Result<AnyLayer, LayerError> {
    init_layer_with_rng(config, d_in, d_out, &mut ChaCha8Rng::seed_from_u64(seed))
}
