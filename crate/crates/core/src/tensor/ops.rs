use std::sync::Arc;

use super::{BackwardOp, Tape, Tensor, TensorError};

/// Elementwise operations available through [`Tape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Silu,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mse,
    SoftmaxCrossEntropy,
}

#[derive(Debug, Clone, Copy)]
pub enum LossTarget<'a> {
    Values(&'a Tensor),
    Classes(&'a [usize]),
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

// ---------------------------------------------------------------------------
// backward ops

struct MatMulOp {
    a: Arc<Vec<f64>>,
    b: Arc<Vec<f64>>,
    m: usize,
    n: usize,
    p: usize,
}

impl BackwardOp for MatMulOp {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn accumulate(&self, input: usize, up: &[f64], grad: &mut [f64]) {
        let (m, n, p) = (self.m, self.n, self.p);
        if input == 0 {
            // dA = dY · Bᵀ
            for i in 0..m {
                let up_row = &up[i * p..(i + 1) * p];
                for k in 0..n {
                    let b_row = &self.b[k * p..(k + 1) * p];
                    grad[i * n + k] += dot(up_row, b_row);
                }
            }
        } else {
            // dB = Aᵀ · dY
            for i in 0..m {
                let up_row = &up[i * p..(i + 1) * p];
                for k in 0..n {
                    let a = self.a[i * n + k];
                    if a == 0.0 {
                        continue;
                    }
                    let g_row = &mut grad[k * p..(k + 1) * p];
                    for (g, u) in g_row.iter_mut().zip(up_row) {
                        *g += a * u;
                    }
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

struct BinaryOp {
    kind: BinaryKind,
    a: Arc<Vec<f64>>,
    b: Arc<Vec<f64>>,
    a_scalar: bool,
    b_scalar: bool,
}

impl BinaryOp {
    fn other(&self, input: usize, i: usize) -> f64 {
        let (src, scalar) = if input == 0 {
            (&self.b, self.b_scalar)
        } else {
            (&self.a, self.a_scalar)
        };
        if scalar {
            src[0]
        } else {
            src[i]
        }
    }
}

impl BackwardOp for BinaryOp {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        }
    }

    fn accumulate(&self, input: usize, up: &[f64], grad: &mut [f64]) {
        let scalar_target = if input == 0 { self.a_scalar } else { self.b_scalar };
        let sign = if self.kind == BinaryKind::Sub && input == 1 {
            -1.0
        } else {
            1.0
        };
        let local = |i: usize| match self.kind {
            BinaryKind::Add | BinaryKind::Sub => sign,
            BinaryKind::Mul => self.other(input, i),
        };
        if scalar_target {
            grad[0] += up.iter().enumerate().map(|(i, u)| u * local(i)).sum::<f64>();
        } else {
            for (i, (g, u)) in grad.iter_mut().zip(up).enumerate() {
                *g += u * local(i);
            }
        }
    }
}

#[derive(Clone, Copy)]
enum UnaryKind {
    Silu,
    Sigmoid,
    Square,
    Scale(f64),
}

struct UnaryOp {
    kind: UnaryKind,
    x: Arc<Vec<f64>>,
}

impl BackwardOp for UnaryOp {
    fn name(&self) -> &'static str {
        match self.kind {
            UnaryKind::Silu => "silu",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Square => "square",
            UnaryKind::Scale(_) => "scale",
        }
    }

    fn accumulate(&self, _input: usize, up: &[f64], grad: &mut [f64]) {
        for ((g, u), &x) in grad.iter_mut().zip(up).zip(self.x.iter()) {
            let d = match self.kind {
                UnaryKind::Silu => silu_prime(x),
                UnaryKind::Sigmoid => {
                    let s = sigmoid(x);
                    s * (1.0 - s)
                }
                UnaryKind::Square => 2.0 * x,
                UnaryKind::Scale(c) => c,
            };
            *g += u * d;
        }
    }
}

struct AddBiasOp {
    cols: usize,
}

impl BackwardOp for AddBiasOp {
    fn name(&self) -> &'static str {
        "add_bias"
    }

    fn accumulate(&self, input: usize, up: &[f64], grad: &mut [f64]) {
        if input == 0 {
            for (g, u) in grad.iter_mut().zip(up) {
                *g += u;
            }
        } else {
            for row in up.chunks_exact(self.cols) {
                for (g, u) in grad.iter_mut().zip(row) {
                    *g += u;
                }
            }
        }
    }
}

struct GatherRowsOp {
    indices: Vec<usize>,
    width: usize,
}

impl BackwardOp for GatherRowsOp {
    fn name(&self) -> &'static str {
        "gather_rows"
    }

    fn accumulate(&self, _input: usize, up: &[f64], grad: &mut [f64]) {
        let w = self.width;
        for (r, &src) in self.indices.iter().enumerate() {
            let dst = &mut grad[src * w..(src + 1) * w];
            for (g, u) in dst.iter_mut().zip(&up[r * w..(r + 1) * w]) {
                *g += u;
            }
        }
    }

    fn saved_bytes(&self) -> usize {
        self.indices.len() * std::mem::size_of::<usize>()
    }
}

struct ConcatLastOp {
    la: usize,
    lb: usize,
}

impl BackwardOp for ConcatLastOp {
    fn name(&self) -> &'static str {
        "concat_last"
    }

    fn accumulate(&self, input: usize, up: &[f64], grad: &mut [f64]) {
        let (offset, width) = if input == 0 { (0, self.la) } else { (self.la, self.lb) };
        if width == 0 {
            return;
        }
        let total = self.la + self.lb;
        for (g_row, up_row) in grad.chunks_exact_mut(width).zip(up.chunks_exact(total)) {
            for (g, u) in g_row.iter_mut().zip(&up_row[offset..offset + width]) {
                *g += u;
            }
        }
    }
}

struct SumOp {
    factor: f64,
}

impl BackwardOp for SumOp {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn accumulate(&self, _input: usize, up: &[f64], grad: &mut [f64]) {
        let u = up[0] * self.factor;
        for g in grad.iter_mut() {
            *g += u;
        }
    }
}

struct IdentityOp;

impl BackwardOp for IdentityOp {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn accumulate(&self, _input: usize, up: &[f64], grad: &mut [f64]) {
        for (g, u) in grad.iter_mut().zip(up) {
            *g += u;
        }
    }
}

struct SoftmaxCrossEntropyOp {
    probs: Vec<f64>,
    labels: Vec<usize>,
    classes: usize,
}

impl BackwardOp for SoftmaxCrossEntropyOp {
    fn name(&self) -> &'static str {
        "softmax_cross_entropy"
    }

    fn accumulate(&self, _input: usize, up: &[f64], grad: &mut [f64]) {
        let c = self.classes;
        let scale = up[0] / self.labels.len() as f64;
        for (r, &label) in self.labels.iter().enumerate() {
            for j in 0..c {
                let onehot = if j == label { 1.0 } else { 0.0 };
                grad[r * c + j] += scale * (self.probs[r * c + j] - onehot);
            }
        }
    }

    fn saved_bytes(&self) -> usize {
        self.probs.len() * 8 + self.labels.len() * std::mem::size_of::<usize>()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// recorded operations

impl Tape {
    /// `[m,n] · [n,p] -> [m,p]`.
    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = self.matmul_primal(a, b)?;
        let tangent = match (a.tangent(), b.tangent()) {
            (None, None) => None,
            (Some(da), None) => Some(self.matmul_primal(da, b)?),
            (None, Some(db)) => Some(self.matmul_primal(a, db)?),
            (Some(da), Some(db)) => {
                let l = self.matmul_primal(da, b)?;
                let r = self.matmul_primal(a, db)?;
                Some(self.binary_primal(BinaryKind::Add, &l, &r)?)
            }
        };
        out.set_tangent(tangent);
        Ok(out)
    }

    fn matmul_primal(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::dim(
                "matmul",
                format!("{:?} x {:?}", a.shape(), b.shape()),
            ));
        }
        let (m, n, p) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let (av, bv) = (a.values(), b.values());
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let out_row = &mut out[i * p..(i + 1) * p];
            for k in 0..n {
                let aik = av[i * n + k];
                if aik == 0.0 {
                    continue;
                }
                for (o, bkj) in out_row.iter_mut().zip(&bv[k * p..(k + 1) * p]) {
                    *o += aik * bkj;
                }
            }
        }
        let op = MatMulOp {
            a: a.shared_values(),
            b: b.shared_values(),
            m,
            n,
            p,
        };
        Ok(self.record(vec![m, p], out, &[a, b], op))
    }

    pub fn elementwise(&mut self, op: Elementwise, args: &[&Tensor]) -> Result<Tensor, TensorError> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            Elementwise::Silu | Elementwise::Square => 1,
        };
        if args.len() != arity {
            return Err(TensorError::Contract(format!(
                "{op:?} takes {arity} argument(s), got {}",
                args.len()
            )));
        }
        match op {
            Elementwise::Add => self.add(args[0], args[1]),
            Elementwise::Sub => self.sub(args[0], args[1]),
            Elementwise::Mul => self.mul(args[0], args[1]),
            Elementwise::Silu => self.silu(args[0]),
            Elementwise::Square => self.square(args[0]),
        }
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    fn binary(&mut self, kind: BinaryKind, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = self.binary_primal(kind, a, b)?;
        let shape = out.shape().to_vec();
        let tangent = match kind {
            BinaryKind::Add | BinaryKind::Sub => match (a.tangent(), b.tangent()) {
                (None, None) => None,
                (Some(da), None) => Some(self.broadcast_to(da, &shape)?),
                (None, Some(db)) => {
                    let db = self.broadcast_to(db, &shape)?;
                    if kind == BinaryKind::Sub {
                        Some(self.unary_primal(UnaryKind::Scale(-1.0), &db))
                    } else {
                        Some(db)
                    }
                }
                (Some(da), Some(db)) => Some(self.binary_primal(kind, da, db)?),
            },
            BinaryKind::Mul => {
                let l = match a.tangent() {
                    Some(da) => Some(self.binary_primal(BinaryKind::Mul, da, b)?),
                    None => None,
                };
                let r = match b.tangent() {
                    Some(db) => Some(self.binary_primal(BinaryKind::Mul, a, db)?),
                    None => None,
                };
                match (l, r) {
                    (None, None) => None,
                    (Some(l), None) => Some(self.broadcast_to(&l, &shape)?),
                    (None, Some(r)) => Some(self.broadcast_to(&r, &shape)?),
                    (Some(l), Some(r)) => Some(self.binary_primal(BinaryKind::Add, &l, &r)?),
                }
            }
        };
        out.set_tangent(tangent);
        Ok(out)
    }

    fn broadcast_to(&mut self, t: &Tensor, shape: &[usize]) -> Result<Tensor, TensorError> {
        if t.shape() == shape {
            Ok(t.clone())
        } else {
            self.binary_primal(BinaryKind::Add, &Tensor::zeros(shape.to_vec()), t)
        }
    }

    fn binary_primal(
        &mut self,
        kind: BinaryKind,
        a: &Tensor,
        b: &Tensor,
    ) -> Result<Tensor, TensorError> {
        let (a_scalar, b_scalar) = (a.is_scalar(), b.is_scalar());
        let shape = if a.shape() == b.shape() || b_scalar {
            a.shape().to_vec()
        } else if a_scalar {
            b.shape().to_vec()
        } else {
            return Err(TensorError::dim(
                "elementwise",
                format!("{:?} vs {:?}", a.shape(), b.shape()),
            ));
        };
        let (av, bv) = (a.values(), b.values());
        let n = shape.iter().product::<usize>();
        let f = |x: f64, y: f64| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let data: Vec<f64> = (0..n)
            .map(|i| {
                let x = if a_scalar { av[0] } else { av[i] };
                let y = if b_scalar { bv[0] } else { bv[i] };
                f(x, y)
            })
            .collect();
        let op = BinaryOp {
            kind,
            a: a.shared_values(),
            b: b.shared_values(),
            a_scalar: a_scalar && !b_scalar,
            b_scalar: b_scalar && !a_scalar,
        };
        Ok(self.record(shape, data, &[a, b], op))
    }

    fn unary_primal(&mut self, kind: UnaryKind, x: &Tensor) -> Tensor {
        let data = x
            .values()
            .iter()
            .map(|&v| match kind {
                UnaryKind::Silu => silu(v),
                UnaryKind::Sigmoid => sigmoid(v),
                UnaryKind::Square => v * v,
                UnaryKind::Scale(c) => c * v,
            })
            .collect();
        let op = UnaryOp {
            kind,
            x: x.shared_values(),
        };
        self.record(x.shape().to_vec(), data, &[x], op)
    }

    /// `x · sigmoid(x)`.
    pub fn silu(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = self.unary_primal(UnaryKind::Silu, x);
        if let Some(dx) = x.tangent() {
            // silu'(x) = s + x·s·(1 − s), built from recorded ops so that the
            // tangent itself stays differentiable.
            let plain = x.without_tangent();
            let s = self.unary_primal(UnaryKind::Sigmoid, &plain);
            let one_minus = self.binary_primal(BinaryKind::Sub, &Tensor::scalar(1.0), &s)?;
            let xs = self.binary_primal(BinaryKind::Mul, &plain, &s)?;
            let t = self.binary_primal(BinaryKind::Mul, &xs, &one_minus)?;
            let d = self.binary_primal(BinaryKind::Add, &s, &t)?;
            let tangent = self.binary_primal(BinaryKind::Mul, &d, dx)?;
            out.set_tangent(Some(tangent));
        }
        Ok(out)
    }

    pub fn sigmoid(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = self.unary_primal(UnaryKind::Sigmoid, x);
        if let Some(dx) = x.tangent() {
            let s = out.without_tangent();
            let one_minus = self.binary_primal(BinaryKind::Sub, &Tensor::scalar(1.0), &s)?;
            let d = self.binary_primal(BinaryKind::Mul, &s, &one_minus)?;
            let tangent = self.binary_primal(BinaryKind::Mul, &d, dx)?;
            out.set_tangent(Some(tangent));
        }
        Ok(out)
    }

    pub fn square(&mut self, x: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = self.unary_primal(UnaryKind::Square, x);
        if let Some(dx) = x.tangent() {
            let plain = x.without_tangent();
            let two_x = self.unary_primal(UnaryKind::Scale(2.0), &plain);
            let tangent = self.binary_primal(BinaryKind::Mul, &two_x, dx)?;
            out.set_tangent(Some(tangent));
        }
        Ok(out)
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, x: &Tensor, c: f64) -> Tensor {
        let mut out = self.unary_primal(UnaryKind::Scale(c), x);
        if let Some(dx) = x.tangent() {
            let t = self.unary_primal(UnaryKind::Scale(c), dx);
            out.set_tangent(Some(t));
        }
        out
    }

    /// Adds a `[n]` bias to every row of a `[m, n]` matrix.
    pub fn add_bias(&mut self, x: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = self.add_bias_primal(x, bias)?;
        let tangent = match (x.tangent(), bias.tangent()) {
            (None, None) => None,
            (Some(dx), None) => Some(dx.clone()),
            (None, Some(db)) => Some(self.add_bias_primal(&Tensor::zeros(x.shape().to_vec()), db)?),
            (Some(dx), Some(db)) => Some(self.add_bias_primal(dx, db)?),
        };
        out.set_tangent(tangent);
        Ok(out)
    }

    fn add_bias_primal(&mut self, x: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
        if x.rank() != 2 || bias.rank() != 1 || x.shape()[1] != bias.shape()[0] {
            return Err(TensorError::dim(
                "add_bias",
                format!("{:?} + {:?}", x.shape(), bias.shape()),
            ));
        }
        let cols = bias.len();
        let mut data = x.values().to_vec();
        for row in data.chunks_exact_mut(cols) {
            for (v, b) in row.iter_mut().zip(bias.values()) {
                *v += b;
            }
        }
        Ok(self.record(x.shape().to_vec(), data, &[x, bias], AddBiasOp { cols }))
    }

    /// Copies rows `indices` of `t` (first dimension) in order.
    pub fn gather_rows(&mut self, t: &Tensor, indices: &[usize]) -> Result<Tensor, TensorError> {
        let mut out = self.gather_primal(t, indices)?;
        if let Some(dt) = t.tangent() {
            let tangent = self.gather_primal(dt, indices)?;
            out.set_tangent(Some(tangent));
        }
        Ok(out)
    }

    fn gather_primal(&mut self, t: &Tensor, indices: &[usize]) -> Result<Tensor, TensorError> {
        if t.rank() == 0 {
            return Err(TensorError::dim("gather_rows", "scalar source"));
        }
        let rows = t.shape()[0];
        let width: usize = t.shape()[1..].iter().product();
        let mut data = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::Index {
                    index: i,
                    extent: rows,
                });
            }
            data.extend_from_slice(&t.values()[i * width..(i + 1) * width]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = indices.len();
        let op = GatherRowsOp {
            indices: indices.to_vec(),
            width,
        };
        Ok(self.record(shape, data, &[t], op))
    }

    /// Concatenation along the last dimension.
    pub fn concat_last(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let mut out = self.concat_primal(a, b)?;
        let tangent = match (a.tangent(), b.tangent()) {
            (None, None) => None,
            (da, db) => {
                let za;
                let da = match da {
                    Some(d) => d,
                    None => {
                        za = Tensor::zeros(a.shape().to_vec());
                        &za
                    }
                };
                let zb;
                let db = match db {
                    Some(d) => d,
                    None => {
                        zb = Tensor::zeros(b.shape().to_vec());
                        &zb
                    }
                };
                Some(self.concat_primal(da, db)?)
            }
        };
        out.set_tangent(tangent);
        Ok(out)
    }

    fn concat_primal(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
        let ra = a.rank();
        if ra == 0 || ra != b.rank() || a.shape()[..ra - 1] != b.shape()[..ra - 1] {
            return Err(TensorError::dim(
                "concat_last",
                format!("{:?} ++ {:?}", a.shape(), b.shape()),
            ));
        }
        let la = a.shape()[ra - 1];
        let lb = b.shape()[ra - 1];
        let outer: usize = a.shape()[..ra - 1].iter().product();
        let mut data = Vec::with_capacity(outer * (la + lb));
        for r in 0..outer {
            data.extend_from_slice(&a.values()[r * la..(r + 1) * la]);
            data.extend_from_slice(&b.values()[r * lb..(r + 1) * lb]);
        }
        let mut shape = a.shape().to_vec();
        shape[ra - 1] = la + lb;
        Ok(self.record(shape, data, &[a, b], ConcatLastOp { la, lb }))
    }

    pub fn reshape(&mut self, t: &Tensor, shape: Vec<usize>) -> Result<Tensor, TensorError> {
        let mut out = self.reshape_primal(t, shape.clone())?;
        if let Some(dt) = t.tangent() {
            let tangent = self.reshape_primal(dt, shape)?;
            out.set_tangent(Some(tangent));
        }
        Ok(out)
    }

    fn reshape_primal(&mut self, t: &Tensor, shape: Vec<usize>) -> Result<Tensor, TensorError> {
        if shape.iter().product::<usize>() != t.len() {
            return Err(TensorError::dim(
                "reshape",
                format!("{:?} -> {shape:?}", t.shape()),
            ));
        }
        Ok(self.record(shape, t.values().to_vec(), &[t], IdentityOp))
    }

    pub fn sum(&mut self, t: &Tensor) -> Tensor {
        self.reduce(t, 1.0)
    }

    pub fn mean(&mut self, t: &Tensor) -> Result<Tensor, TensorError> {
        if t.is_empty() {
            return Err(TensorError::Domain("mean of empty tensor".into()));
        }
        Ok(self.reduce(t, 1.0 / t.len() as f64))
    }

    fn reduce(&mut self, t: &Tensor, factor: f64) -> Tensor {
        let mut out = self.reduce_primal(t, factor);
        if let Some(dt) = t.tangent() {
            let tangent = self.reduce_primal(dt, factor);
            out.set_tangent(Some(tangent));
        }
        out
    }

    fn reduce_primal(&mut self, t: &Tensor, factor: f64) -> Tensor {
        let s = t.values().iter().sum::<f64>() * factor;
        self.record(Vec::new(), vec![s], &[t], SumOp { factor })
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, pred: &Tensor, target: &Tensor) -> Result<Tensor, TensorError> {
        if pred.shape() != target.shape() {
            return Err(TensorError::dim(
                "mse",
                format!("{:?} vs {:?}", pred.shape(), target.shape()),
            ));
        }
        if pred.is_empty() {
            return Err(TensorError::Domain("mse of empty batch".into()));
        }
        let diff = self.sub(pred, target)?;
        let sq = self.square(&diff)?;
        self.mean(&sq)
    }

    /// Mean softmax cross-entropy of `[m, c]` logits against class ids.
    /// Log-sum-exp is stabilized by subtracting each row's maximum. Tangents
    /// are not propagated through this loss head.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: &Tensor,
        labels: &[usize],
    ) -> Result<Tensor, TensorError> {
        if logits.rank() != 2 || logits.shape()[0] != labels.len() {
            return Err(TensorError::dim(
                "softmax_cross_entropy",
                format!("logits {:?}, {} labels", logits.shape(), labels.len()),
            ));
        }
        if labels.is_empty() {
            return Err(TensorError::Domain("cross-entropy of empty batch".into()));
        }
        let c = logits.shape()[1];
        let mut probs = Vec::with_capacity(logits.len());
        let mut loss = 0.0;
        for (row, &label) in logits.values().chunks_exact(c).zip(labels) {
            if label >= c {
                return Err(TensorError::Index {
                    index: label,
                    extent: c,
                });
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum_exp.ln();
            loss += lse - row[label];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        loss /= labels.len() as f64;
        let op = SoftmaxCrossEntropyOp {
            probs,
            labels: labels.to_vec(),
            classes: c,
        };
        Ok(self.record(Vec::new(), vec![loss], &[logits], op))
    }

    pub fn reduce_loss(
        &mut self,
        kind: LossKind,
        pred: &Tensor,
        target: LossTarget<'_>,
    ) -> Result<Tensor, TensorError> {
        match (kind, target) {
            (LossKind::Mse, LossTarget::Values(t)) => self.mse(pred, t),
            (LossKind::SoftmaxCrossEntropy, LossTarget::Classes(labels)) => {
                self.softmax_cross_entropy(pred, labels)
            }
            (kind, _) => Err(TensorError::Contract(format!(
                "target kind does not match loss {kind:?}"
            ))),
        }
    }
}
