use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Tensor, TensorError};

/// Handle of a recorded node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Vector-Jacobian product of one recorded operation.
///
/// `accumulate` adds the contribution of `upstream` (the gradient with
/// respect to this node's output) to `grad`, the gradient buffer of the
/// operation's `input`-th parent. It is only called for parents that are
/// themselves recorded.
pub trait BackwardOp: Send + Sync {
    fn name(&self) -> &'static str;

    fn accumulate(&self, input: usize, upstream: &[f64], grad: &mut [f64]);

    /// Bytes held by saved intermediates (excluding the parents' own values,
    /// which are shared).
    fn saved_bytes(&self) -> usize {
        0
    }
}

struct Node {
    len: usize,
    shape: Vec<usize>,
    parents: Vec<Option<NodeId>>,
    op: Option<Box<dyn BackwardOp>>,
}

/// Operation record for one differentiation pass.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children. Tapes are cheap; build a fresh one per training step.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    allocated: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Bytes of tensor data produced or saved by recorded operations.
    pub fn allocated_bytes(&self) -> usize {
        self.allocated
    }

    /// Registers `t` as a differentiable leaf (a parameter) and returns the
    /// tracked copy.
    pub fn leaf(&mut self, t: &Tensor) -> Tensor {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            len: t.len(),
            shape: t.shape().to_vec(),
            parents: Vec::new(),
            op: None,
        });
        let mut out = t.detach();
        out.set_node(Some(id));
        out
    }

    /// Registers `t` in place as a leaf.
    pub fn watch(&mut self, t: &mut Tensor) {
        *t = self.leaf(t);
    }

    /// Wraps freshly computed `data` as the output of `op` applied to
    /// `parents`. The node is only recorded when some parent is recorded;
    /// otherwise the result is a constant and `op` is dropped.
    pub fn record(
        &mut self,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: &[&Tensor],
        op: impl BackwardOp + 'static,
    ) -> Tensor {
        let mut out = Tensor::from_parts(shape, Arc::new(data));
        if parents.iter().any(|p| p.is_recorded()) {
            self.allocated += out.nbytes() + op.saved_bytes();
            let id = NodeId(self.nodes.len());
            self.nodes.push(Node {
                len: out.len(),
                shape: out.shape().to_vec(),
                parents: parents.iter().map(|p| p.node()).collect(),
                op: Some(Box::new(op)),
            });
            out.set_node(Some(id));
        }
        out
    }

    /// Attaches `direction` as the tangent of `t`. Every operation consuming
    /// the result propagates the directional derivative.
    pub fn seed_tangent(&self, t: &Tensor, direction: &Tensor) -> Result<Tensor, TensorError> {
        if t.shape() != direction.shape() {
            return Err(TensorError::dim(
                "seed_tangent",
                format!("{:?} vs {:?}", t.shape(), direction.shape()),
            ));
        }
        let mut out = t.clone();
        out.set_tangent(Some(direction.clone()));
        Ok(out)
    }

    /// Reverse sweep from a scalar `loss`. Every leaf on the tape receives a
    /// gradient (zeros when the loss does not depend on it).
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients, TensorError> {
        if loss.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let root = loss
            .node()
            .ok_or_else(|| TensorError::Contract("loss is not recorded on the tape".into()))?;
        if root.0 >= self.nodes.len() {
            return Err(TensorError::Contract("loss belongs to another tape".into()));
        }

        let mut grads: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            let Some(op) = node.op.as_ref() else { continue };
            let Some(upstream) = grads[id].take() else { continue };
            for (input, parent) in node.parents.iter().enumerate() {
                let Some(parent) = parent else { continue };
                let mut buf = grads[parent.0]
                    .take()
                    .unwrap_or_else(|| vec![0.0; self.nodes[parent.0].len]);
                op.accumulate(input, &upstream, &mut buf);
                grads[parent.0] = Some(buf);
            }
        }

        let mut out = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            if node.op.is_none() {
                let g = grads[id].take().unwrap_or_else(|| vec![0.0; node.len]);
                out.insert(NodeId(id), Tensor::from_parts(node.shape.clone(), Arc::new(g)));
            }
        }
        for (id, node) in self.nodes.iter().enumerate().skip(root.0 + 1) {
            if node.op.is_none() {
                out.insert(
                    NodeId(id),
                    Tensor::from_parts(node.shape.clone(), Arc::new(vec![0.0; node.len])),
                );
            }
        }
        Ok(Gradients { grads: out })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: BTreeMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&Tensor> {
        t.node().and_then(|id| self.grads.get(&id))
    }

    pub fn by_node(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}
