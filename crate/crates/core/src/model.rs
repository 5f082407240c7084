//! Stacks of layers: KAN, UKAN, or an MLP of linear layers with SiLU between.

use rand::Rng;

use crate::layers::{init_layer_with_rng, AnyLayer, Layer, LayerConfig, LayerError};
use crate::tensor::{Gradients, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Kan,
    Ukan,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Kan => "kan",
            ModelKind::Ukan => "ukan",
            ModelKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    kind: ModelKind,
    layers: Vec<AnyLayer>,
}

impl Model {
    /// Builds `widths.len() − 1` layers. `layer` must match `kind` (ignored
    /// for MLPs).
    pub fn init(
        kind: ModelKind,
        widths: &[usize],
        layer: &LayerConfig,
        rng: &mut impl Rng,
    ) -> Result<Self, LayerError> {
        if widths.len() < 2 {
            return Err(LayerError::Config(format!("need at least two widths, got {widths:?}")));
        }
        let config = match (kind, layer) {
            (ModelKind::Mlp, _) => &LayerConfig::Linear,
            (ModelKind::Kan, LayerConfig::Kan { .. }) | (ModelKind::Ukan, LayerConfig::Ukan(_)) => layer,
            _ => {
                return Err(LayerError::Config(format!(
                    "layer settings do not match model kind {}",
                    kind.name()
                )))
            }
        };
        let layers = widths
            .windows(2)
            .map(|w| init_layer_with_rng(config, w[0], w[1], rng))
            .collect::<Result<_, _>>()?;
        Ok(Model { kind, layers })
    }

    pub fn from_layers(kind: ModelKind, layers: Vec<AnyLayer>) -> Result<Self, LayerError> {
        if layers.is_empty() {
            return Err(LayerError::Config("model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].d_out() != pair[1].d_in() {
                return Err(LayerError::Config(format!(
                    "layer widths do not chain: {} then {}",
                    pair[0].d_out(),
                    pair[1].d_in()
                )));
            }
        }
        Ok(Model { kind, layers })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[AnyLayer] {
        &self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].d_in()];
        w.extend(self.layers.iter().map(Layer::d_out));
        w
    }

    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor, LayerError> {
        let mut h = self.layers[0].forward(tape, x)?;
        for layer in &self.layers[1..] {
            if self.kind == ModelKind::Mlp {
                h = tape.silu(&h)?;
            }
            h = layer.forward(tape, &h)?;
        }
        Ok(h)
    }

    /// Untracked forward pass split across `threads` row blocks. The result
    /// does not depend on the split.
    pub fn predict(&self, x: &Tensor, threads: usize) -> Result<Tensor, LayerError> {
        let rows = x.shape().first().copied().unwrap_or(0);
        let threads = threads.clamp(1, rows.max(1));
        let detached = x.detach();
        if threads == 1 {
            return self.forward(&mut Tape::new(), &detached);
        }
        let d = x.len() / rows.max(1);
        let chunk = rows.div_ceil(threads);
        let blocks: Vec<Tensor> = (0..rows)
            .step_by(chunk)
            .map(|start| {
                let end = (start + chunk).min(rows);
                Tensor::new(vec![end - start, d], x.values()[start * d..end * d].to_vec())
            })
            .collect::<Result<_, _>>()?;
        let outputs: Vec<Result<Tensor, LayerError>> = std::thread::scope(|s| {
            let handles: Vec<_> = blocks
                .iter()
                .map(|b| s.spawn(move || self.forward(&mut Tape::new(), b)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("forward worker panicked")).collect()
        });
        let mut data = Vec::new();
        let mut width = 0;
        for out in outputs {
            let out = out?;
            width = out.shape()[1];
            data.extend_from_slice(out.values());
        }
        Ok(Tensor::new(vec![rows, width], data)?)
    }

    /// Parameters named `"{layer}.{name}"`, in a fixed order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.parameters().into_iter().map(move |(n, t)| (format!("{i}.{n}"), t)))
            .collect()
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.parameters().into_iter().map(|(_, t)| t)).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.parameters_mut().into_iter().map(|(_, t)| t))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Registers every parameter as a leaf of `tape`.
    pub fn watch(&mut self, tape: &mut Tape) {
        for p in self.parameters_mut() {
            tape.watch(p);
        }
    }

    /// Gradients of every parameter in [`Model::parameters`] order.
    pub fn gradients(&self, grads: &Gradients) -> Result<Vec<Tensor>, LayerError> {
        self.named_parameters()
            .into_iter()
            .map(|(name, p)| {
                grads
                    .get(p)
                    .cloned()
                    .ok_or_else(|| LayerError::Config(format!("parameter {name} is not on the tape")))
            })
            .collect()
    }

    /// Replaces parameter values in [`Model::parameters`] order.
    pub fn load_parameters(&mut self, values: &[Tensor]) -> Result<(), LayerError> {
        let mut params = self.parameters_mut();
        if params.len() != values.len() {
            return Err(LayerError::Config(format!(
                "model has {} parameters, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape() != v.shape() {
                return Err(LayerError::Config(format!(
                    "parameter shape {:?}, got {:?}",
                    p.shape(),
                    v.shape()
                )));
            }
            p.values_mut().copy_from_slice(v.values());
        }
        Ok(())
    }
}
