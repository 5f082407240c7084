//! Unbounded KAN layer.
//!
//! The grid is the infinite uniform grid `t_j = j·δg`. Coefficients are
//! organised in groups of `K` consecutive indices: group `g` of feature `f`
//! owns global coefficients `[g·K, (g+1)·K)`, and a coefficient-generator
//! (CG) network maps `(feature embedding of f, positional encoding of g)` to
//! those `K` coefficients for every output. Cell `g_id` reads the window
//! `[g_id, g_id + K)`, which spans groups `g = ⌊g_id / K⌋` and `g + 1`
//! starting at offset `g_id mod K` (Euclidean).

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::kernel::{spline_edges, SplinePlan};
use super::{normal_tensor, Layer, LayerError};
use crate::bspline::{locate, BasisMatrix};
use crate::tensor::{Tape, Tensor};

/// Grid group of one input feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupId {
    pub feature: usize,
    pub group: i64,
}

/// Sinusoidal encoding of a (possibly negative) group index:
/// `pe[2i] = sin(g / 10000^(2i/d))`, `pe[2i+1] = cos(g / 10000^(2i/d))`.
pub fn positional_encoding(group: i64, d_pe: usize) -> Result<Vec<f64>, LayerError> {
    if d_pe % 2 != 0 {
        return Err(LayerError::Config(format!(
            "positional encoding width must be even, got {d_pe}"
        )));
    }
    let g = group as f64;
    let mut pe = Vec::with_capacity(d_pe);
    for i in 0..d_pe / 2 {
        let freq = 10000f64.powf(2.0 * i as f64 / d_pe as f64);
        let angle = g / freq;
        pe.push(angle.sin());
        pe.push(angle.cos());
    }
    Ok(pe)
}

/// Picks the `K` coefficients of cell `g_id` out of the concatenated
/// coefficients of its group `g = ⌊g_id/K⌋` (`current`) and group `g + 1`
/// (`next`).
pub fn select_window(current: &[f64], next: &[f64], g_id: i64, order: usize) -> Vec<f64> {
    debug_assert!(order >= 1);
    let i = g_id.rem_euclid(order as i64) as usize;
    current.iter().chain(next).skip(i).take(order).copied().collect()
}

/// Shape of a [`UkanLayer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UkanConfig {
    pub degree: usize,
    pub delta_g: f64,
    pub d_pe: usize,
    pub d_femb: usize,
    /// CG hidden width; `None` means `2 · (d_pe + d_femb)`.
    pub d_hidden: Option<usize>,
}

impl UkanConfig {
    pub fn hidden_width(&self) -> usize {
        self.d_hidden.unwrap_or(2 * (self.d_pe + self.d_femb))
    }
}

#[derive(Debug, Clone)]
pub struct UkanLayer {
    d_in: usize,
    d_out: usize,
    delta_g: f64,
    d_pe: usize,
    basis: BasisMatrix,
    feature_embedding: Tensor,
    cg_hidden_w: Tensor,
    cg_hidden_b: Tensor,
    cg_out_w: Tensor,
    cg_out_b: Tensor,
    scale: Tensor,
}

impl UkanLayer {
    /// All parameters zero except unit scales.
    pub fn new(d_in: usize, d_out: usize, config: &UkanConfig) -> Result<Self, LayerError> {
        if d_in == 0 || d_out == 0 {
            return Err(LayerError::Config(format!("invalid layer dims {d_in}x{d_out}")));
        }
        if config.d_pe % 2 != 0 {
            return Err(LayerError::Config(format!(
                "positional encoding width must be even, got {}",
                config.d_pe
            )));
        }
        if !(config.delta_g > 0.0) || !config.delta_g.is_finite() {
            return Err(LayerError::Config(format!(
                "grid spacing must be positive, got {}",
                config.delta_g
            )));
        }
        let hidden = config.hidden_width();
        if hidden == 0 || config.d_pe + config.d_femb == 0 {
            return Err(LayerError::Config("coefficient generator has zero width".into()));
        }
        let basis = BasisMatrix::new(config.degree)?;
        let d_cg_in = config.d_pe + config.d_femb;
        let d_cg_out = d_out * basis.order();
        Ok(UkanLayer {
            d_in,
            d_out,
            delta_g: config.delta_g,
            d_pe: config.d_pe,
            basis,
            feature_embedding: Tensor::zeros(vec![d_in, config.d_femb]),
            cg_hidden_w: Tensor::zeros(vec![d_cg_in, hidden]),
            cg_hidden_b: Tensor::zeros(vec![hidden]),
            cg_out_w: Tensor::zeros(vec![hidden, d_cg_out]),
            cg_out_b: Tensor::zeros(vec![d_cg_out]),
            scale: Tensor::full(vec![d_in, d_out], 1.0),
        })
    }

    /// CG weights ~ N(0, 0.1/√fan_in), embeddings ~ N(0, 1), biases 0,
    /// scales 1.
    pub fn init(
        d_in: usize,
        d_out: usize,
        config: &UkanConfig,
        rng: &mut impl Rng,
    ) -> Result<Self, LayerError> {
        let mut layer = Self::new(d_in, d_out, config)?;
        layer.feature_embedding = normal_tensor(layer.feature_embedding.shape().to_vec(), 1.0, rng);
        let fan_hidden = layer.cg_hidden_w.shape()[0] as f64;
        layer.cg_hidden_w =
            normal_tensor(layer.cg_hidden_w.shape().to_vec(), 0.1 / fan_hidden.sqrt(), rng);
        let fan_out = layer.cg_out_w.shape()[0] as f64;
        layer.cg_out_w = normal_tensor(layer.cg_out_w.shape().to_vec(), 0.1 / fan_out.sqrt(), rng);
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

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn delta_g(&self) -> f64 {
        self.delta_g
    }

    pub fn d_pe(&self) -> usize {
        self.d_pe
    }

    pub fn basis(&self) -> &BasisMatrix {
        &self.basis
    }

    pub fn scale(&self) -> &Tensor {
        &self.scale
    }

    /// Mutable access to parameters by name, for tests and tools.
    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.parameters_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }

    /// CG outputs for every listed group: `[groups.len(), d_out · K]`, row `r`
    /// holding output `o`'s coefficients at `[o·K, (o+1)·K)`.
    pub fn cg_table(&self, tape: &mut Tape, groups: &[GroupId]) -> Result<Tensor, LayerError> {
        let mut features = Vec::with_capacity(groups.len());
        let mut pe = Vec::with_capacity(groups.len() * self.d_pe);
        for gid in groups {
            if gid.feature >= self.d_in {
                return Err(LayerError::Index {
                    index: gid.feature,
                    extent: self.d_in,
                });
            }
            features.push(gid.feature);
            pe.extend(positional_encoding(gid.group, self.d_pe)?);
        }
        let pe = Tensor::new(vec![groups.len(), self.d_pe], pe)?;
        let femb = tape.gather_rows(&self.feature_embedding, &features)?;
        let input = tape.concat_last(&femb, &pe)?;
        let pre = tape.matmul(&input, &self.cg_hidden_w)?;
        let pre = tape.add_bias(&pre, &self.cg_hidden_b)?;
        let hidden = tape.silu(&pre)?;
        let out = tape.matmul(&hidden, &self.cg_out_w)?;
        Ok(tape.add_bias(&out, &self.cg_out_b)?)
    }

    /// The `[d_out, K]` coefficients generated for group `g` of feature `f`.
    pub fn cg_coefficients(
        &self,
        tape: &mut Tape,
        feature: usize,
        group: i64,
    ) -> Result<Tensor, LayerError> {
        let table = self.cg_table(tape, &[GroupId { feature, group }])?;
        Ok(tape.reshape(&table, vec![self.d_out, self.order()])?)
    }

    /// Forward pass with CG calls deduplicated per distinct `(f, g)`.
    pub fn forward_with(&self, tape: &mut Tape, x: &Tensor, dedup: bool) -> Result<Tensor, LayerError> {
        self.forward_with_generator(tape, x, dedup, |tape, groups| self.cg_table(tape, groups))
    }

    /// Forward pass with a custom coefficient source. `generate` receives the
    /// group list and must return a `[groups.len(), d_out · K]` table.
    pub fn forward_with_generator(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        dedup: bool,
        generate: impl FnOnce(&mut Tape, &[GroupId]) -> Result<Tensor, LayerError>,
    ) -> Result<Tensor, LayerError> {
        if x.rank() != 2 || x.shape()[1] != self.d_in {
            return Err(LayerError::Config(format!(
                "expected input [batch, {}], got {:?}",
                self.d_in,
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        let k = self.order();
        let row_width = self.d_out * k;

        let mut groups: Vec<GroupId> = Vec::new();
        let mut index: HashMap<GroupId, usize> = HashMap::new();
        let mut intern = |gid: GroupId| -> usize {
            if dedup {
                *index.entry(gid).or_insert_with(|| {
                    groups.push(gid);
                    groups.len() - 1
                })
            } else {
                groups.push(gid);
                groups.len() - 1
            }
        };

        let mut u = Vec::with_capacity(batch * self.d_in);
        let mut offsets = Vec::with_capacity(batch * self.d_in * k);
        for f in 0..self.d_in {
            for b in 0..batch {
                let xv = x.values()[b * self.d_in + f];
                let loc = locate(xv, self.delta_g)
                    .map_err(|_| LayerError::Domain(format!("non-finite input {xv}")))?;
                let g = loc.cell.div_euclid(k as i64);
                let i = loc.cell.rem_euclid(k as i64) as usize;
                let current = intern(GroupId { feature: f, group: g });
                let next = intern(GroupId { feature: f, group: g + 1 });
                u.push(loc.u);
                for j in 0..k {
                    let pos = i + j;
                    let (row, col) = if pos < k { (current, pos) } else { (next, pos - k) };
                    offsets.push(row * row_width + col);
                }
            }
        }

        let table = generate(tape, &groups)?;
        if table.shape() != [groups.len(), row_width] {
            return Err(LayerError::Config(format!(
                "coefficient table {:?}, expected [{}, {row_width}]",
                table.shape(),
                groups.len()
            )));
        }
        let plan = SplinePlan {
            basis: self.basis.clone(),
            delta_g: self.delta_g,
            batch,
            d_in: self.d_in,
            d_out: self.d_out,
            stride: k,
            table_len: table.len(),
            active: vec![true; u.len()],
            u,
            offsets,
        };
        Ok(spline_edges(tape, Arc::new(plan), x, &table, &self.scale)?)
    }
}

pub fn ukan_forward(layer: &UkanLayer, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
    layer.forward_with(tape, x, true)
}

impl Layer for UkanLayer {
    fn d_in(&self) -> usize {
        self.d_in
    }

    fn d_out(&self) -> usize {
        self.d_out
    }

    fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
        ukan_forward(self, tape, x)
    }

    fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("feature_embedding", &self.feature_embedding),
            ("cg_hidden_w", &self.cg_hidden_w),
            ("cg_hidden_b", &self.cg_hidden_b),
            ("cg_out_w", &self.cg_out_w),
            ("cg_out_b", &self.cg_out_b),
            ("scale", &self.scale),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("feature_embedding", &mut self.feature_embedding),
            ("cg_hidden_w", &mut self.cg_hidden_w),
            ("cg_hidden_b", &mut self.cg_hidden_b),
            ("cg_out_w", &mut self.cg_out_w),
            ("cg_out_b", &mut self.cg_out_b),
            ("scale", &mut self.scale),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> UkanConfig {
        UkanConfig {
            degree: 3,
            delta_g: 0.5,
            d_pe: 4,
            d_femb: 3,
            d_hidden: Some(6),
        }
    }

    #[test]
    fn positional_encoding_examples() {
        let pe = positional_encoding(0, 6).unwrap();
        assert_eq!(pe, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);

        let pe = positional_encoding(1, 4).unwrap();
        let expected = [1f64.sin(), 1f64.cos(), 0.01f64.sin(), 0.01f64.cos()];
        for (a, b) in pe.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((pe[0] - 0.841471).abs() < 1e-6);
        assert!((pe[1] - 0.540302).abs() < 1e-6);
        assert!((pe[2] - 0.0099998).abs() < 1e-7);
        assert!((pe[3] - 0.99995).abs() < 1e-6);

        let pos = positional_encoding(7, 8).unwrap();
        let neg = positional_encoding(-7, 8).unwrap();
        for i in 0..4 {
            assert_eq!(neg[2 * i], -pos[2 * i]);
            assert_eq!(neg[2 * i + 1], pos[2 * i + 1]);
        }
        assert!(positional_encoding(1, 5).is_err());
    }

    #[test]
    fn select_window_examples() {
        let prev = [0.0, 1.0, 2.0, 3.0];
        let next = [10.0, 11.0, 12.0, 13.0];
        assert_eq!(select_window(&prev, &next, 5, 4), vec![1.0, 2.0, 3.0, 10.0]);
        assert_eq!(select_window(&prev, &next, 8, 4), prev.to_vec());
        assert_eq!(select_window(&prev, &next, -1, 4), vec![3.0, 10.0, 11.0, 12.0]);
        assert_eq!((-1i64).div_euclid(4), -1);
    }

    #[test]
    fn zero_cg_gives_zero_coefficients_and_outputs() {
        let layer = UkanLayer::new(2, 3, &config()).unwrap();
        let mut tape = Tape::new();
        let c = layer.cg_coefficients(&mut tape, 1, -42).unwrap();
        assert_eq!(c.shape(), &[3, 4]);
        assert!(c.values().iter().all(|&v| v == 0.0));

        let x = Tensor::from_rows(&[[1e6, -1e6], [0.3, -0.7]]).unwrap();
        let y = ukan_forward(&layer, &mut tape, &x).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_only_cg_is_constant() {
        let mut layer = UkanLayer::new(1, 1, &config()).unwrap();
        layer.parameter_mut("cg_out_b").unwrap().values_mut().fill(0.625);
        let mut tape = Tape::new();
        let a = layer.cg_coefficients(&mut tape, 0, 3).unwrap();
        let b = layer.cg_coefficients(&mut tape, 0, -100).unwrap();
        assert_eq!(a.values(), b.values());

        let x = Tensor::from_rows(&[[-3.3], [0.0], [0.49], [12345.6]]).unwrap();
        let y = ukan_forward(&layer, &mut tape, &x).unwrap();
        for v in y.values() {
            assert!((v - 0.625).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let layer = UkanLayer::new(2, 1, &config()).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(
            layer.cg_coefficients(&mut tape, 2, 0),
            Err(LayerError::Index { index: 2, extent: 2 })
        ));
        let x = Tensor::from_rows(&[[f64::NAN, 0.0]]).unwrap();
        assert!(matches!(ukan_forward(&layer, &mut tape, &x), Err(LayerError::Domain(_))));
        let x = Tensor::from_rows(&[[f64::INFINITY, 0.0]]).unwrap();
        assert!(matches!(ukan_forward(&layer, &mut tape, &x), Err(LayerError::Domain(_))));

        let mut bad = config();
        bad.d_pe = 3;
        assert!(UkanLayer::new(1, 1, &bad).is_err());
        bad = config();
        bad.delta_g = 0.0;
        assert!(UkanLayer::new(1, 1, &bad).is_err());
    }
}
