//! Reverse-mode automatic differentiation over `Matrix` values.
//!
//! Operations are appended to a [`Tape`] as they are evaluated; parents always
//! precede children, so the node list is already a topological order and
//! [`Tape::backward`] is a single reverse sweep.

use super::{matrix::softmax_in_place, Matrix, Scalar};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    Tanh(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Sum(NodeId),
    Gather(NodeId, Vec<usize>),
    Concat(NodeId, NodeId),
    /// Cached class probabilities and the target class.
    SoftmaxCrossEntropy(NodeId, Matrix<T>, usize),
    /// Binary cross-entropy on a single logit, with `label` in {0, 1}.
    LogisticLoss(NodeId, T),
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Matrix<T>,
}

/// Append-only record of a computation.
#[derive(Clone, Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`]. Nodes that do not reach the loss
/// have no adjoint.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    adjoints: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.adjoints.get(id.0).and_then(Option::as_ref)
    }

    /// Adjoint of `id`, or zeros shaped like `like` when the node did not
    /// influence the loss.
    pub fn get_or_zeros(&self, id: NodeId, like: &Matrix<T>) -> Matrix<T> {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Matrix<T>> {
        self.adjoints.get_mut(id.0).and_then(Option::take)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, value: Matrix<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix<T>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let v = self.value(a).scale(c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(T::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(relu);
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn gather(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let v = self.value(a).gather_cols(idx)?;
        Ok(self.push(Op::Gather(a, idx.to_vec()), v))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(Op::Concat(a, b), v))
    }

    /// Mean-free softmax cross-entropy of a `1 x M` logit row against `class`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, class: usize) -> Result<NodeId> {
        let l = self.value(logits);
        if l.rows() != 1 {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                left: l.shape(),
                right: (1, l.cols()),
            });
        }
        if class >= l.cols() {
            return Err(Error::Index {
                what: "class",
                index: class,
                len: l.cols(),
            });
        }
        let max = l.as_slice().iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let log_total = l
            .as_slice()
            .iter()
            .fold(T::zero(), |acc, &v| acc + (v - max).exp())
            .ln();
        let loss = log_total + max - l.get(0, class);
        let mut probs = l.clone();
        softmax_in_place(probs.as_mut_slice());
        Ok(self.push(
            Op::SoftmaxCrossEntropy(logits, probs, class),
            Matrix::scalar(loss),
        ))
    }

    /// Numerically stable logistic loss on a `1 x 1` logit.
    pub fn logistic_loss(&mut self, logit: NodeId, label: T) -> Result<NodeId> {
        let l = self.value(logit);
        if l.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "logistic_loss",
                left: l.shape(),
                right: (1, 1),
            });
        }
        let z = l.get(0, 0);
        let loss = z.max(T::zero()) - z * label + (-z.abs()).exp().ln_1p();
        Ok(self.push(Op::LogisticLoss(logit, label), Matrix::scalar(loss)))
    }

    /// Reverse sweep from a scalar node. Every node that influences `loss`
    /// receives an adjoint; all others are left undefined.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {} has shape {:?}",
                loss.0,
                lv.shape()
            )));
        }
        let mut adj: Vec<Option<Matrix<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.value(*b).transpose())?;
                    let db = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut adj, *a, da)?;
                    accumulate(&mut adj, *b, db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g.clone())?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g.scale(-T::one()))?;
                }
                Op::Mul(a, b) => {
                    let da = g.hadamard(self.value(*b))?;
                    let db = g.hadamard(self.value(*a))?;
                    accumulate(&mut adj, *a, da)?;
                    accumulate(&mut adj, *b, db)?;
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.scale(*c))?,
                Op::Tanh(a) => {
                    let d = g.zip_with(&node.value, "tanh'", |g, y| g * (T::one() - y * y))?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Relu(a) => {
                    let d = g.zip_with(self.value(*a), "relu'", |g, x| {
                        if x > T::zero() {
                            g
                        } else {
                            T::zero()
                        }
                    })?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_with(&node.value, "sigmoid'", |g, y| g * y * (T::one() - y))?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Sum(a) => {
                    let s = self.value(*a);
                    accumulate(&mut adj, *a, Matrix::filled(s.rows(), s.cols(), g.get(0, 0)))?;
                }
                Op::Gather(a, idx) => {
                    let src = self.value(*a);
                    let mut d = Matrix::zeros(src.rows(), src.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        let cur = d.get(0, i);
                        d.set(0, i, cur + g.get(0, k));
                    }
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Concat(a, b) => {
                    let na = self.value(*a).cols();
                    let gs = g.as_slice();
                    let da = Matrix::from_vec(1, na, gs[..na].to_vec())?;
                    let db = Matrix::from_vec(1, gs.len() - na, gs[na..].to_vec())?;
                    accumulate(&mut adj, *a, da)?;
                    accumulate(&mut adj, *b, db)?;
                }
                Op::SoftmaxCrossEntropy(a, probs, class) => {
                    let gl = g.get(0, 0);
                    let mut d = probs.scale(gl);
                    let cur = d.get(0, *class);
                    d.set(0, *class, cur - gl);
                    accumulate(&mut adj, *a, d)?;
                }
                Op::LogisticLoss(a, label) => {
                    let z = self.value(*a).get(0, 0);
                    let d = Matrix::scalar(g.get(0, 0) * (sigmoid(z) - *label));
                    accumulate(&mut adj, *a, d)?;
                }
            }
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn accumulate<T: Scalar>(adj: &mut [Option<Matrix<T>>], id: NodeId, d: Matrix<T>) -> Result<()> {
    match &mut adj[id.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => {
            *slot = Some(d);
            Ok(())
        }
    }
}

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_gradient;

    #[test]
    fn square_at_three() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(3.0f64));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().get(0, 0), 6.0);
    }

    #[test]
    fn tanh_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(0.0f64));
        let y = t.tanh(x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::<f64>::zeros(1, 2));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_nodes_have_no_adjoint() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(1.0f64));
        let unused = t.leaf(Matrix::scalar(2.0f64));
        let y = t.scale(x, 3.0);
        let g = t.backward(y).unwrap();
        assert!(g.get(unused).is_none());
        assert!(g.get(y).is_some());
        assert_eq!(g.get(x).unwrap().get(0, 0), 3.0);
    }

    #[test]
    fn cross_entropy_and_logistic_match_finite_differences() {
        let x0 = Matrix::row_vector(vec![0.3f64, -1.2, 2.0]).unwrap();
        let f = |m: &Matrix<f64>| {
            let mut t = Tape::new();
            let x = t.leaf(m.clone());
            let l = t.softmax_cross_entropy(x, 1).unwrap();
            t.value(l).get(0, 0)
        };
        let mut t = Tape::new();
        let x = t.leaf(x0.clone());
        let l = t.softmax_cross_entropy(x, 1).unwrap();
        let g = t.backward(l).unwrap();
        let fd = finite_diff_gradient(f, &x0, 1e-5).unwrap();
        for (a, b) in g.get(x).unwrap().as_slice().iter().zip(fd.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }

        for &(z, y) in &[(0.7f64, 1.0f64), (-3.0, 0.0), (40.0, 0.0), (-40.0, 1.0)] {
            let mut t = Tape::new();
            let x = t.leaf(Matrix::scalar(z));
            let l = t.logistic_loss(x, y).unwrap();
            let g = t.backward(l).unwrap().get(x).unwrap().get(0, 0);
            assert!((g - (sigmoid(z) - y)).abs() < 1e-15);
            assert!(t.value(l).get(0, 0).is_finite());
        }
    }

    #[test]
    fn gather_concat_route_gradients() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::row_vector(vec![1.0f64, 2.0, 3.0]).unwrap());
        let a = t.gather(x, &[2, 0, 2]).unwrap();
        let c = t.leaf(Matrix::row_vector(vec![5.0]).unwrap());
        let cat = t.concat(a, c).unwrap();
        let s = t.sum(cat);
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().as_slice(), &[1.0, 0.0, 2.0]);
        assert_eq!(g.get(c).unwrap().as_slice(), &[1.0]);
    }
}
