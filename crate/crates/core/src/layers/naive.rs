//! Full-grid reference for [`KanLayer`]: every one of the `G + k` basis
//! functions is evaluated per input by the Cox–de Boor triangle and dotted
//! with the whole coefficient vector. Same results as the matrix form, with
//! `Θ(K · G · d_in · d_out)` work and a `[batch, d_in, G + k]` saved basis.

use std::sync::Arc;

use super::kan::KanLayer;
use super::LayerError;
use crate::bspline::full_grid_basis;
use crate::tensor::{BackwardOp, Tape, Tensor};

struct NaiveSplineOp {
    batch: usize,
    d_in: usize,
    d_out: usize,
    n_basis: usize,
    degree: usize,
    delta_g: f64,
    /// Knot-unit position and containing knot interval per (sample, feature).
    tau: Vec<(f64, usize)>,
    active: Vec<bool>,
    basis: Vec<f64>,
    table: Arc<Vec<f64>>,
    scale: Arc<Vec<f64>>,
}

impl NaiveSplineOp {
    fn coef(&self, f: usize, j: usize, o: usize) -> f64 {
        self.table[(f * self.n_basis + j) * self.d_out + o]
    }

    fn edge(&self, row: &[f64], f: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &bj) in row.iter().enumerate() {
            for (o, v) in out.iter_mut().enumerate() {
                *v += bj * self.coef(f, j, o);
            }
        }
    }
}

impl BackwardOp for NaiveSplineOp {
    fn name(&self) -> &'static str {
        "naive_spline_edges"
    }

    fn accumulate(&self, input: usize, up: &[f64], grad: &mut [f64]) {
        let (d_in, d_out, n) = (self.d_in, self.d_out, self.n_basis);
        let mut edge = vec![0.0; d_out];
        match input {
            0 => {
                if self.degree == 0 {
                    return;
                }
                let k = self.degree;
                let mut lower = vec![0.0; n + 1];
                let mut scratch = vec![0.0; n + k + 1];
                let mut deriv = vec![0.0; n];
                for b in 0..self.batch {
                    for f in 0..d_in {
                        let idx = b * d_in + f;
                        if !self.active[idx] {
                            continue;
                        }
                        let (tau, cell) = self.tau[idx];
                        full_grid_basis(tau, cell, n, k, k - 1, &mut lower, &mut scratch);
                        for j in 0..n {
                            deriv[j] = (lower[j] - lower[j + 1]) / self.delta_g;
                        }
                        self.edge(&deriv, f, &mut edge);
                        grad[idx] += (0..d_out)
                            .map(|o| up[b * d_out + o] * self.scale[f * d_out + o] * edge[o])
                            .sum::<f64>();
                    }
                }
            }
            1 => {
                for b in 0..self.batch {
                    for f in 0..d_in {
                        let row = &self.basis[(b * d_in + f) * n..(b * d_in + f + 1) * n];
                        for (j, &bj) in row.iter().enumerate() {
                            for o in 0..d_out {
                                grad[(f * n + j) * d_out + o] +=
                                    up[b * d_out + o] * self.scale[f * d_out + o] * bj;
                            }
                        }
                    }
                }
            }
            2 => {
                for b in 0..self.batch {
                    for f in 0..d_in {
                        let row = &self.basis[(b * d_in + f) * n..(b * d_in + f + 1) * n];
                        self.edge(row, f, &mut edge);
                        for o in 0..d_out {
                            grad[f * d_out + o] += up[b * d_out + o] * edge[o];
                        }
                    }
                }
            }
            _ => unreachable!("naive_spline_edges has three inputs"),
        }
    }

    fn saved_bytes(&self) -> usize {
        self.basis.len() * 8 + self.tau.len() * 16 + self.active.len()
    }
}

/// Bytes of the full-grid basis the naive pass allocates for this input.
pub fn naive_basis_bytes(layer: &KanLayer, batch: usize) -> usize {
    batch * layer.d_in() * layer.n_coefficients() * std::mem::size_of::<f64>()
}

/// Reference forward pass with the same contract as
/// [`kan_forward`](super::kan_forward). Does not propagate tangents.
pub fn naive_kan_forward(
    layer: &KanLayer,
    tape: &mut Tape,
    x: &Tensor,
) -> Result<Tensor, LayerError> {
    let batch = layer.check_input(x)?;
    if x.tangent().is_some() {
        return Err(LayerError::Unsupported(
            "naive reference layer does not propagate tangents".into(),
        ));
    }
    if x.values().iter().any(|v| v.is_nan()) {
        return Err(LayerError::Domain("NaN input".into()));
    }
    let d_in = layer.d_in();
    let d_out = layer.d_out();
    let k = layer.degree();
    let n = layer.n_coefficients();
    let grid = layer.grid();

    let bytes = naive_basis_bytes(layer, batch);
    let mut basis: Vec<f64> = Vec::new();
    basis
        .try_reserve_exact(batch * d_in * n)
        .map_err(|_| LayerError::OutOfMemory { bytes })?;
    basis.resize(batch * d_in * n, 0.0);

    let mut tau = Vec::with_capacity(batch * d_in);
    let mut active = Vec::with_capacity(batch * d_in);
    let mut scratch = vec![0.0; n + k + 1];
    for (idx, &xv) in x.values().iter().enumerate() {
        let (cell, u, inside) = grid.locate(xv);
        let t = (cell + k) as f64 + u;
        full_grid_basis(t, cell + k, n, k, k, &mut basis[idx * n..(idx + 1) * n], &mut scratch);
        tau.push((t, cell + k));
        active.push(inside);
    }

    let table = layer.coeffs().shared_values();
    let scale = layer.scale().shared_values();
    let mut y = vec![0.0; batch * d_out];
    for b in 0..batch {
        let y_row = &mut y[b * d_out..(b + 1) * d_out];
        for f in 0..d_in {
            let row = &basis[(b * d_in + f) * n..(b * d_in + f + 1) * n];
            let s_row = &scale[f * d_out..(f + 1) * d_out];
            for (j, &bj) in row.iter().enumerate() {
                let t = &table[(f * n + j) * d_out..(f * n + j + 1) * d_out];
                for ((yv, s), c) in y_row.iter_mut().zip(s_row).zip(t) {
                    *yv += s * bj * c;
                }
            }
        }
    }

    let op = NaiveSplineOp {
        batch,
        d_in,
        d_out,
        n_basis: n,
        degree: k,
        delta_g: grid.delta(),
        tau,
        active,
        basis,
        table,
        scale,
    };
    let out = tape.record(vec![batch, d_out], y, &[x, layer.coeffs(), layer.scale()], op);
    layer.add_base_branch(tape, x, out)
}
