//! Append-only reverse-mode autodiff tape over [`Tensor2`] values.
//!
//! Nodes are created in topological order, so every parent id is smaller than
//! its child id and a reverse sweep over ids is a valid backward schedule.
//! Leaves are either parameters (receive gradients) or constants (never do).

use super::{NumericsError, Tensor2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }

    #[cfg(test)]
    pub(crate) fn from_index(i: usize) -> Self {
        NodeId(i)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    ScaleByNode(NodeId, NodeId),
    Tanh(NodeId),
    Silu(NodeId),
    Exp(NodeId),
    SoftmaxRows(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SliceRows(NodeId, usize),
    Mse(NodeId, NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor2,
    requires_grad: bool,
}

#[derive(Default, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`]. Only nodes that depend on a
/// parameter leaf carry an entry.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor2> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for `id`, or zeros shaped like `like` when no path exists.
    pub fn get_or_zeros(&self, id: NodeId, like: &Tensor2) -> Tensor2 {
        self.get(id).cloned().unwrap_or_else(|| Tensor2::zeros(like.rows(), like.cols()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor2, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn unary(&mut self, op: Op, a: NodeId, value: Tensor2, name: &str) -> Result<NodeId, NumericsError> {
        value.check_finite(name)?;
        let rg = self.requires_grad(a);
        Ok(self.push(op, value, rg))
    }

    fn binary(&mut self, op: Op, a: NodeId, b: NodeId, value: Tensor2) -> NodeId {
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(op, value, rg)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor2) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Non-trainable leaf; no gradient is ever recorded for it.
    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.binary(Op::MatMul(a, b), a, b, v))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).transpose();
        self.unary(Op::Transpose(a), a, v, "transpose")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.binary(Op::Add(a, b), a, b, v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.binary(Op::Sub(a, b), a, b, v))
    }

    /// Broadcast-adds a `1 × cols` row node to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).add_row(self.value(row))?;
        Ok(self.binary(Op::AddRow(a, row), a, row, v))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.binary(Op::Hadamard(a, b), a, b, v))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> Result<NodeId, NumericsError> {
        let v = self.value(a).scale(k);
        self.unary(Op::Scale(a, k), a, v, "scale")
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> Result<NodeId, NumericsError> {
        let v = self.value(a).map(|x| x + k);
        self.unary(Op::AddScalar(a), a, v, "add_scalar")
    }

    /// Multiplies every entry of `a` by the value of the `1 × 1` node `s`.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, NumericsError> {
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(NumericsError::shape("scale_by", self.value(a).shape(), sv.shape()));
        }
        let k = sv.get(0, 0);
        let v = self.value(a).scale(k);
        v.check_finite("scale_by")?;
        Ok(self.binary(Op::ScaleByNode(a, s), a, s, v))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).map(f64::tanh);
        self.unary(Op::Tanh(a), a, v, "tanh")
    }

    pub fn silu(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).map(|x| x * sigmoid(x));
        self.unary(Op::Silu(a), a, v, "silu")
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.value(a).map(f64::exp);
        self.unary(Op::Exp(a), a, v, "exp")
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(NumericsError::Domain("softmax of an empty row".into()));
        }
        let mut out = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            out.extend(super::softmax(x.row(r))?);
        }
        let v = Tensor2::from_vec(x.rows(), x.cols(), out)?;
        self.unary(Op::SoftmaxRows(a), a, v, "softmax")
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let v = Tensor2::filled(1, 1, self.value(a).sum());
        self.unary(Op::Sum(a), a, v, "sum")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, NumericsError> {
        let v = Tensor2::filled(1, 1, self.value(a).mean());
        self.unary(Op::Mean(a), a, v, "mean")
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, NumericsError> {
        let v = self.value(a).slice_rows(start, end)?;
        self.unary(Op::SliceRows(a, start), a, v, "slice_rows")
    }

    /// Column slice, expressed through transpose and row slicing.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId, NumericsError> {
        let t = self.transpose(a)?;
        let s = self.slice_rows(t, start, end)?;
        self.transpose(s)
    }

    /// Mean squared error between two equally shaped nodes, as a `1 × 1` node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId, NumericsError> {
        let p = self.value(pred);
        let t = self.value(target);
        if p.shape() != t.shape() {
            return Err(NumericsError::shape("mse", p.shape(), t.shape()));
        }
        let n = p.len() as f64;
        let v = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        let v = Tensor2::filled(1, 1, v);
        v.check_finite("mse")?;
        Ok(self.binary(Op::Mse(pred, target), pred, target, v))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, NumericsError> {
        if self.value(root).shape() != (1, 1) {
            return Err(NumericsError::Contract(format!(
                "backward root must be 1x1, got {}x{}",
                self.value(root).rows(),
                self.value(root).cols()
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; root.0 + 1];
        if self.requires_grad(root) {
            grads[root.0] = Some(Tensor2::filled(1, 1, 1.0));
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut send = |id: NodeId, contrib: Tensor2| -> Result<(), NumericsError> {
                if !self.requires_grad(id) {
                    return Ok(());
                }
                match &mut grads[id.0] {
                    Some(acc) => *acc = acc.add(&contrib)?,
                    slot @ None => *slot = Some(contrib),
                }
                Ok(())
            };
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.requires_grad(a) {
                        send(a, g.matmul(&self.value(b).transpose())?)?;
                    }
                    if self.requires_grad(b) {
                        send(b, self.value(a).transpose().matmul(&g)?)?;
                    }
                }
                Op::Transpose(a) => send(a, g.transpose())?,
                Op::Add(a, b) => {
                    send(a, g.clone())?;
                    send(b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    send(a, g.clone())?;
                    send(b, g.scale(-1.0))?;
                }
                Op::AddRow(a, row) => {
                    send(row, g.sum_rows())?;
                    send(a, g.clone())?;
                }
                Op::Hadamard(a, b) => {
                    send(a, g.hadamard(self.value(b))?)?;
                    send(b, g.hadamard(self.value(a))?)?;
                }
                Op::Scale(a, k) => send(a, g.scale(k))?,
                Op::AddScalar(a) => send(a, g.clone())?,
                Op::ScaleByNode(a, s) => {
                    let k = self.value(s).get(0, 0);
                    send(a, g.scale(k))?;
                    let ds = g.hadamard(self.value(a))?.sum();
                    send(s, Tensor2::filled(1, 1, ds))?;
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    send(a, g.zip_map(y, "tanh'", |gi, yi| gi * (1.0 - yi * yi))?)?;
                }
                Op::Silu(a) => {
                    let x = self.value(a);
                    send(
                        a,
                        g.zip_map(x, "silu'", |gi, xi| {
                            let s = sigmoid(xi);
                            gi * s * (1.0 + xi * (1.0 - s))
                        })?,
                    )?;
                }
                Op::Exp(a) => send(a, g.hadamard(&node.value)?)?,
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut out = Vec::with_capacity(y.len());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        out.extend(yr.iter().zip(gr).map(|(yi, gi)| yi * (gi - dot)));
                    }
                    send(a, Tensor2::from_vec(y.rows(), y.cols(), out)?)?;
                }
                Op::Sum(a) => {
                    let x = self.value(a);
                    send(a, Tensor2::filled(x.rows(), x.cols(), g.get(0, 0)))?;
                }
                Op::Mean(a) => {
                    let x = self.value(a);
                    send(a, Tensor2::filled(x.rows(), x.cols(), g.get(0, 0) / x.len() as f64))?;
                }
                Op::SliceRows(a, start) => {
                    let x = self.value(a);
                    let mut full = Tensor2::zeros(x.rows(), x.cols());
                    let c = x.cols();
                    full.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    send(a, full)?;
                }
                Op::Mse(p, t) => {
                    let pv = self.value(p);
                    let k = 2.0 * g.get(0, 0) / pv.len() as f64;
                    let d = pv.zip_map(self.value(t), "mse'", |a, b| k * (a - b))?;
                    send(t, d.scale(-1.0))?;
                    send(p, d)?;
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parents_precede_children() {
        let mut g = Graph::new();
        let a = g.param(Tensor2::filled(2, 2, 1.0));
        let b = g.constant(Tensor2::identity(2));
        let c = g.matmul(a, b).unwrap();
        let d = g.sum(c).unwrap();
        assert!(a < c && b < c && c < d);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let w = g.param(Tensor2::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap());
        let f = g.sum(w).unwrap();
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(w).unwrap(), &Tensor2::filled(2, 2, 1.0));
    }

    #[test]
    fn half_squared_norm_gradient_is_w() {
        let w0 = Tensor2::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let mut g = Graph::new();
        let w = g.param(w0.clone());
        let sq = g.hadamard(w, w).unwrap();
        let s = g.sum(sq).unwrap();
        let f = g.scale(s, 0.5).unwrap();
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(w).unwrap(), &w0);
    }

    #[test]
    fn non_scalar_root_is_contract_error() {
        let mut g = Graph::new();
        let w = g.param(Tensor2::zeros(2, 1));
        assert!(matches!(g.backward(w), Err(NumericsError::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor2::filled(1, 3, 2.0));
        let w = g.param(Tensor2::filled(1, 3, 1.0));
        let p = g.hadamard(c, w).unwrap();
        let f = g.sum(p).unwrap();
        let grads = g.backward(f).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(w).unwrap(), &Tensor2::filled(1, 3, 2.0));
    }

    #[test]
    fn shared_consumers_accumulate() {
        let mut g = Graph::new();
        let w = g.param(Tensor2::filled(1, 2, 3.0));
        let a = g.add(w, w).unwrap();
        let f = g.sum(a).unwrap();
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(w).unwrap(), &Tensor2::filled(1, 2, 2.0));
    }
}
