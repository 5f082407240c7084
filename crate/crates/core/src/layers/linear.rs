use rand::Rng;

use super::{normal_tensor, Layer, LayerError};
use crate::tensor::{Tape, Tensor};

/// Affine layer `x·W + b`, the building block of the MLP baseline.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    weight: Tensor,
    bias: Tensor,
}

impl LinearLayer {
    pub fn new(d_in: usize, d_out: usize) -> Result<Self, LayerError> {
        if d_in == 0 || d_out == 0 {
            return Err(LayerError::Config(format!("invalid layer dims {d_in}x{d_out}")));
        }
        Ok(LinearLayer {
            weight: Tensor::zeros(vec![d_in, d_out]),
            bias: Tensor::zeros(vec![d_out]),
        })
    }

    /// Weights ~ N(0, 1/√d_in), bias 0.
    pub fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<Self, LayerError> {
        let mut layer = Self::new(d_in, d_out)?;
        layer.weight = normal_tensor(vec![d_in, d_out], 1.0 / (d_in as f64).sqrt(), rng);
        Ok(layer)
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }
}

impl Layer for LinearLayer {
    fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
        let y = tape.matmul(x, &self.weight)?;
        Ok(tape.add_bias(&y, &self.bias)?)
    }

    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("weight", &self.weight), ("bias", &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}
