//! Fused spline-edge evaluation shared by the bounded and unbounded layers.
//!
//! Computes `y[b,o] = Σ_f scale[f,o] · w[b,f] · Σ_j B^(d)_j(u[b,f]) · T[off[b,f,j] + o·stride]`
//! where `T` is a flat coefficient table, `off` addresses the `K`-window of
//! coefficients for sample `b` and feature `f`, and `w` is an optional
//! per-(sample, feature) weight used for tangent propagation.

use std::sync::Arc;

use crate::bspline::BasisMatrix;
use crate::tensor::{BackwardOp, Tape, Tensor, TensorError};

/// Per-(sample, feature) segment positions and coefficient-window addresses,
/// stored feature-major (`f · batch + b`) so that one feature's coefficients
/// stay cache-resident while the batch streams past.
pub(crate) struct SplinePlan {
    pub basis: BasisMatrix,
    pub delta_g: f64,
    pub batch: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub stride: usize,
    pub table_len: usize,
    pub u: Vec<f64>,
    /// `[d_in · batch · K]` table offsets of output 0.
    pub offsets: Vec<usize>,
    /// Whether `∂u/∂x` is non-zero (false where the input was clamped).
    pub active: Vec<bool>,
}

impl SplinePlan {
    fn order(&self) -> usize {
        self.basis.order()
    }

    /// Plan position of sample `b`, feature `f`.
    pub fn slot(&self, b: usize, f: usize) -> usize {
        f * self.batch + b
    }

    fn rows(&self, derivative: usize) -> Vec<f64> {
        let k = self.order();
        let mut rows = vec![0.0; self.u.len() * k];
        for (idx, (&u, out)) in self.u.iter().zip(rows.chunks_exact_mut(k)).enumerate() {
            if derivative > 0 && !self.active[idx] {
                continue;
            }
            self.basis.basis_row_into(u, derivative, self.delta_g, out);
        }
        rows
    }

    fn bytes(&self) -> usize {
        self.u.len() * 8 + self.offsets.len() * std::mem::size_of::<usize>() + self.active.len()
    }
}

struct SplineEdgeOp {
    plan: Arc<SplinePlan>,
    derivative: usize,
    rows: Vec<f64>,
    table: Arc<Vec<f64>>,
    scale: Arc<Vec<f64>>,
    weight: Option<Arc<Vec<f64>>>,
}

impl SplineEdgeOp {
    fn weight(&self, idx: usize) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w[idx])
    }

    /// `Σ_j rows[j] · T[off_j + o·stride]` for every output `o`.
    fn edge_values(&self, rows: &[f64], slot: usize, out: &mut [f64]) {
        let plan = &self.plan;
        let k = plan.order();
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..k {
            let r = rows[slot * k + j];
            if r == 0.0 {
                continue;
            }
            let base = plan.offsets[slot * k + j];
            for (o, v) in out.iter_mut().enumerate() {
                *v += r * self.table[base + o * plan.stride];
            }
        }
    }

    fn forward(&self) -> Vec<f64> {
        let plan = &self.plan;
        let (d_in, d_out, k) = (plan.d_in, plan.d_out, plan.order());
        let mut y = vec![0.0; plan.batch * d_out];
        for f in 0..d_in {
            let s_row = &self.scale[f * d_out..(f + 1) * d_out];
            for b in 0..plan.batch {
                let w = self.weight(b * d_in + f);
                if w == 0.0 {
                    continue;
                }
                let slot = plan.slot(b, f);
                let y_row = &mut y[b * d_out..(b + 1) * d_out];
                for j in 0..k {
                    let c = w * self.rows[slot * k + j];
                    if c == 0.0 {
                        continue;
                    }
                    let base = plan.offsets[slot * k + j];
                    if plan.stride == 1 {
                        let t = &self.table[base..base + d_out];
                        for ((yv, s), tv) in y_row.iter_mut().zip(s_row).zip(t) {
                            *yv += s * c * tv;
                        }
                    } else {
                        for (o, (yv, s)) in y_row.iter_mut().zip(s_row).enumerate() {
                            *yv += s * c * self.table[base + o * plan.stride];
                        }
                    }
                }
            }
        }
        y
    }
}

impl BackwardOp for SplineEdgeOp {
    fn name(&self) -> &'static str {
        "spline_edges"
    }

    fn accumulate(&self, input: usize, up: &[f64], grad: &mut [f64]) {
        let plan = &self.plan;
        let (d_in, d_out, k) = (plan.d_in, plan.d_out, plan.order());
        let mut edge = vec![0.0; d_out];
        match input {
            0 => {
                let next = plan.rows(self.derivative + 1);
                for f in 0..d_in {
                    let s_row = &self.scale[f * d_out..(f + 1) * d_out];
                    for b in 0..plan.batch {
                        let (idx, slot) = (b * d_in + f, plan.slot(b, f));
                        let w = self.weight(idx);
                        if !plan.active[slot] || w == 0.0 {
                            continue;
                        }
                        self.edge_values(&next, slot, &mut edge);
                        let g: f64 = (0..d_out).map(|o| up[b * d_out + o] * s_row[o] * edge[o]).sum();
                        grad[idx] += w * g;
                    }
                }
            }
            1 => {
                for f in 0..d_in {
                    let s_row = &self.scale[f * d_out..(f + 1) * d_out];
                    for b in 0..plan.batch {
                        let w = self.weight(b * d_in + f);
                        if w == 0.0 {
                            continue;
                        }
                        let slot = plan.slot(b, f);
                        let up_row = &up[b * d_out..(b + 1) * d_out];
                        for j in 0..k {
                            let c = w * self.rows[slot * k + j];
                            if c == 0.0 {
                                continue;
                            }
                            let base = plan.offsets[slot * k + j];
                            if plan.stride == 1 {
                                let g = &mut grad[base..base + d_out];
                                for ((gv, u), s) in g.iter_mut().zip(up_row).zip(s_row) {
                                    *gv += u * s * c;
                                }
                            } else {
                                for o in 0..d_out {
                                    grad[base + o * plan.stride] += up_row[o] * s_row[o] * c;
                                }
                            }
                        }
                    }
                }
            }
            2 => {
                for f in 0..d_in {
                    for b in 0..plan.batch {
                        let w = self.weight(b * d_in + f);
                        if w == 0.0 {
                            continue;
                        }
                        self.edge_values(&self.rows, plan.slot(b, f), &mut edge);
                        for o in 0..d_out {
                            grad[f * d_out + o] += up[b * d_out + o] * w * edge[o];
                        }
                    }
                }
            }
            3 => {
                for f in 0..d_in {
                    let s_row = &self.scale[f * d_out..(f + 1) * d_out];
                    for b in 0..plan.batch {
                        self.edge_values(&self.rows, plan.slot(b, f), &mut edge);
                        grad[b * d_in + f] += (0..d_out)
                            .map(|o| up[b * d_out + o] * s_row[o] * edge[o])
                            .sum::<f64>();
                    }
                }
            }
            _ => unreachable!("spline_edges has at most four inputs"),
        }
    }

    fn saved_bytes(&self) -> usize {
        self.rows.len() * 8 + self.plan.bytes()
    }
}

fn check_inputs(plan: &SplinePlan, x: &Tensor, table: &Tensor, scale: &Tensor) -> Result<(), TensorError> {
    if x.shape() != [plan.batch, plan.d_in] {
        return Err(TensorError::dim("spline_edges", format!("input {:?}", x.shape())));
    }
    if table.len() != plan.table_len {
        return Err(TensorError::dim(
            "spline_edges",
            format!("table of {} values, plan expects {}", table.len(), plan.table_len),
        ));
    }
    if scale.shape() != [plan.d_in, plan.d_out] {
        return Err(TensorError::dim("spline_edges", format!("scale {:?}", scale.shape())));
    }
    Ok(())
}

fn record(
    tape: &mut Tape,
    plan: &Arc<SplinePlan>,
    derivative: usize,
    x: &Tensor,
    table: &Tensor,
    scale: &Tensor,
    weight: Option<&Tensor>,
) -> Tensor {
    let op = SplineEdgeOp {
        plan: Arc::clone(plan),
        derivative,
        rows: plan.rows(derivative),
        table: table.shared_values(),
        scale: scale.shared_values(),
        weight: weight.map(Tensor::shared_values),
    };
    let y = op.forward();
    let shape = vec![plan.batch, plan.d_out];
    match weight {
        Some(w) => tape.record(shape, y, &[x, table, scale, w], op),
        None => tape.record(shape, y, &[x, table, scale], op),
    }
}

/// Evaluates all spline edges and sums them per output, propagating the
/// tangents of `x`, `table` and `scale`.
pub(crate) fn spline_edges(
    tape: &mut Tape,
    plan: Arc<SplinePlan>,
    x: &Tensor,
    table: &Tensor,
    scale: &Tensor,
) -> Result<Tensor, TensorError> {
    check_inputs(&plan, x, table, scale)?;
    let mut y = record(tape, &plan, 0, x, table, scale, None);
    let mut parts = Vec::new();
    if let Some(dx) = x.tangent() {
        parts.push(record(tape, &plan, 1, x, table, scale, Some(dx)));
    }
    if let Some(dt) = table.tangent() {
        parts.push(record(tape, &plan, 0, x, dt, scale, None));
    }
    if let Some(ds) = scale.tangent() {
        parts.push(record(tape, &plan, 0, x, table, ds, None));
    }
    let mut tangent: Option<Tensor> = None;
    for part in parts {
        tangent = Some(match tangent {
            None => part,
            Some(acc) => tape.add(&acc, &part)?,
        });
    }
    y.set_tangent(tangent);
    Ok(y)
}
