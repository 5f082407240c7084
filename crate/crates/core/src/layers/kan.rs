use std::sync::Arc;

use rand::Rng;

use super::kernel::{spline_edges, SplinePlan};
use super::{normal_tensor, Layer, LayerError};
use crate::bspline::BasisMatrix;
use crate::tensor::{Tape, Tensor};

/// Uniform grid of `cells` cells on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedGrid {
    pub min: f64,
    pub max: f64,
    pub cells: usize,
}

impl BoundedGrid {
    pub fn new(min: f64, max: f64, cells: usize) -> Result<Self, LayerError> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(LayerError::Config(format!("grid bounds must satisfy min < max, got [{min}, {max}]")));
        }
        if cells == 0 {
            return Err(LayerError::Config("grid needs at least one cell".into()));
        }
        Ok(BoundedGrid { min, max, cells })
    }

    pub fn delta(&self) -> f64 {
        (self.max - self.min) / self.cells as f64
    }

    /// Cell, fractional position and whether `x` lies inside the grid.
    /// Points outside are clamped onto the boundary cells.
    pub fn locate(&self, x: f64) -> (usize, f64, bool) {
        let inside = x >= self.min && x <= self.max;
        let xc = x.clamp(self.min, self.max);
        let t = (xc - self.min) / self.delta();
        let cell = (t.floor().max(0.0) as usize).min(self.cells - 1);
        let u = (t - cell as f64).clamp(0.0, 1.0);
        (cell, u, inside)
    }
}

/// Bounded-grid KAN layer with matrix-form spline evaluation.
///
/// Coefficients are stored as `[d_in, G + k, d_out]`, so the `K`-window of
/// one input feature is a contiguous `K × d_out` block.
#[derive(Debug, Clone)]
pub struct KanLayer {
    d_in: usize,
    d_out: usize,
    grid: BoundedGrid,
    basis: BasisMatrix,
    coeffs: Tensor,
    scale: Tensor,
    base_weight: Option<Tensor>,
}

impl KanLayer {
    pub fn new(
        d_in: usize,
        d_out: usize,
        degree: usize,
        grid: BoundedGrid,
        base_branch: bool,
    ) -> Result<Self, LayerError> {
        if d_in == 0 || d_out == 0 {
            return Err(LayerError::Config(format!("invalid layer dims {d_in}x{d_out}")));
        }
        let basis = BasisMatrix::new(degree)?;
        let n_coef = grid.cells + degree;
        Ok(KanLayer {
            d_in,
            d_out,
            grid,
            basis,
            coeffs: Tensor::zeros(vec![d_in, n_coef, d_out]),
            scale: Tensor::full(vec![d_in, d_out], 1.0),
            base_weight: base_branch.then(|| Tensor::zeros(vec![d_in, d_out])),
        })
    }

    /// Coefficients ~ N(0, 0.1/√d_in), scales 1.
    pub fn init(
        d_in: usize,
        d_out: usize,
        degree: usize,
        grid: BoundedGrid,
        base_branch: bool,
        rng: &mut impl Rng,
    ) -> Result<Self, LayerError> {
        let mut layer = Self::new(d_in, d_out, degree, grid, base_branch)?;
        let std = 0.1 / (d_in as f64).sqrt();
        layer.coeffs = normal_tensor(layer.coeffs.shape().to_vec(), std, rng);
        if let Some(w) = &mut layer.base_weight {
            *w = normal_tensor(w.shape().to_vec(), std, rng);
        }
        Ok(layer)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn grid(&self) -> BoundedGrid {
        self.grid
    }

    pub fn basis(&self) -> &BasisMatrix {
        &self.basis
    }

    pub fn n_coefficients(&self) -> usize {
        self.grid.cells + self.degree()
    }

    pub fn coeffs(&self) -> &Tensor {
        &self.coeffs
    }

    pub fn scale(&self) -> &Tensor {
        &self.scale
    }

    pub fn base_weight(&self) -> Option<&Tensor> {
        self.base_weight.as_ref()
    }

    /// Coefficient of edge `(f, o)` at global index `j ∈ [0, G + k)`.
    pub fn coefficient(&self, f: usize, o: usize, j: usize) -> f64 {
        self.coeffs.values()[(f * self.n_coefficients() + j) * self.d_out + o]
    }

    /// Sets every coefficient from `value(f, o, j)`.
    pub fn set_coefficients(&mut self, mut value: impl FnMut(usize, usize, usize) -> f64) {
        let (n, d_out) = (self.n_coefficients(), self.d_out);
        let d_in = self.d_in;
        let vals = self.coeffs.values_mut();
        for f in 0..d_in {
            for j in 0..n {
                for o in 0..d_out {
                    vals[(f * n + j) * d_out + o] = value(f, o, j);
                }
            }
        }
    }

    pub fn set_scale(&mut self, scale: Tensor) -> Result<(), LayerError> {
        if scale.shape() != [self.d_in, self.d_out] {
            return Err(LayerError::Config(format!("scale shape {:?}", scale.shape())));
        }
        self.scale = scale;
        Ok(())
    }

    pub fn set_base_weight(&mut self, w: Option<Tensor>) -> Result<(), LayerError> {
        if let Some(w) = &w {
            if w.shape() != [self.d_in, self.d_out] {
                return Err(LayerError::Config(format!("base weight shape {:?}", w.shape())));
            }
        }
        self.base_weight = w;
        Ok(())
    }

    pub(crate) fn check_input(&self, x: &Tensor) -> Result<usize, LayerError> {
        if x.rank() != 2 || x.shape()[1] != self.d_in {
            return Err(LayerError::Config(format!(
                "expected input [batch, {}], got {:?}",
                self.d_in,
                x.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    fn plan(&self, x: &Tensor, batch: usize) -> SplinePlan {
        let k = self.basis.order();
        let n = self.n_coefficients();
        let mut u = Vec::with_capacity(batch * self.d_in);
        let mut offsets = Vec::with_capacity(batch * self.d_in * k);
        let mut active = Vec::with_capacity(batch * self.d_in);
        for f in 0..self.d_in {
            for b in 0..batch {
                let (cell, uu, inside) = self.grid.locate(x.values()[b * self.d_in + f]);
                u.push(uu);
                active.push(inside);
                for j in 0..k {
                    offsets.push((f * n + cell + j) * self.d_out);
                }
            }
        }
        SplinePlan {
            basis: self.basis.clone(),
            delta_g: self.grid.delta(),
            batch,
            d_in: self.d_in,
            d_out: self.d_out,
            stride: 1,
            table_len: self.coeffs.len(),
            u,
            offsets,
            active,
        }
    }

    pub(crate) fn add_base_branch(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        y: Tensor,
    ) -> Result<Tensor, LayerError> {
        match &self.base_weight {
            None => Ok(y),
            Some(w) => {
                let act = tape.silu(x)?;
                let base = tape.matmul(&act, w)?;
                Ok(tape.add(&y, &base)?)
            }
        }
    }
}

/// Matrix-form forward pass. Work per sample is `Θ(K · d_in · d_out)`,
/// independent of the number of grid cells.
pub fn kan_forward(layer: &KanLayer, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
    let batch = layer.check_input(x)?;
    if x.values().iter().any(|v| v.is_nan()) {
        return Err(LayerError::Domain("NaN input".into()));
    }
    let plan = Arc::new(layer.plan(x, batch));
    let y = spline_edges(tape, plan, x, &layer.coeffs, &layer.scale)?;
    layer.add_base_branch(tape, x, y)
}

impl Layer for KanLayer {
    fn d_in(&self) -> usize {
        self.d_in
    }

    fn d_out(&self) -> usize {
        self.d_out
    }

    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
        kan_forward(self, tape, x)
    }

    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        let mut p = vec![("coeffs", &self.coeffs), ("scale", &self.scale)];
        if let Some(w) = &self.base_weight {
            p.push(("base_weight", w));
        }
        p
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut p = vec![("coeffs", &mut self.coeffs), ("scale", &mut self.scale)];
        if let Some(w) = &mut self.base_weight {
            p.push(("base_weight", w));
        }
        p
    }
}
