use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{tape, Matrix, NodeId, Rng, Scalar, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => tape::relu(x),
            Activation::Sigmoid => tape::sigmoid(x),
            Activation::Identity => x,
        }
    }

    fn record<T: Scalar>(self, t: &mut Tape<T>, x: NodeId) -> NodeId {
        match self {
            Activation::Tanh => t.tanh(x),
            Activation::Relu => t.relu(x),
            Activation::Sigmoid => t.sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Upper bound on |f'|.
    pub fn slope_bound(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }
}

/// Affine layer `x W + b` on row vectors; `weight` is `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Option<Matrix<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(weight: Matrix<T>, bias: Option<Matrix<T>>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.shape() != (1, weight.cols()) {
                return Err(Error::Shape {
                    op: "dense bias",
                    left: weight.shape(),
                    right: b.shape(),
                });
            }
        }
        Ok(Self { weight, bias })
    }

    fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = x.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            let cols = out.cols();
            for r in 0..out.rows() {
                for c in 0..cols {
                    out.set(r, c, out.get(r, c) + b.get(0, c));
                }
            }
        }
        Ok(out)
    }
}

/// Feed-forward network: activation after every hidden layer, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
    activation: Activation,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: Activation,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(input);
        dims.extend_from_slice(hidden);
        dims.push(output);
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weight: rng.glorot(w[0], w[1]),
                bias: bias.then(|| Matrix::zeros(1, w[1])),
            })
            .collect();
        Self { layers, activation }
    }

    pub fn from_layers(layers: Vec<Dense<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weight.cols() != pair[1].weight.rows() {
                return Err(Error::Shape {
                    op: "mlp layers",
                    left: pair[0].weight.shape(),
                    right: pair[1].weight.shape(),
                });
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h = h.map(|v| self.activation.apply(v));
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Parameters in declaration order: per layer, weight then bias.
    pub fn params(&self) -> Vec<&Matrix<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            if let Some(b) = &l.bias {
                out.push(b);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            if let Some(b) = &mut l.bias {
                out.push(b);
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| 1 + usize::from(l.bias.is_some()))
            .sum()
    }

    /// Records the forward pass on `tape`. `params` are this network's
    /// parameter nodes in declaration order.
    pub fn forward_tape(&self, t: &mut Tape<T>, x: NodeId, params: &[NodeId]) -> Result<NodeId> {
        if params.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "expected {} parameter nodes, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut cursor = params.iter().copied();
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = self.activation.record(t, h);
            }
            let w = cursor.next().expect("counted");
            h = t.matmul(h, w)?;
            if layer.bias.is_some() {
                let b = cursor.next().expect("counted");
                h = t.add(h, b)?;
            }
        }
        Ok(h)
    }

    /// Upper bound on the Lipschitz constant w.r.t. the Euclidean norm:
    /// product of Frobenius norms times the activation slope bound per
    /// hidden layer.
    pub fn lipschitz_bound(&self) -> T {
        let slope = T::lit(self.activation.slope_bound());
        let mut bound = T::one();
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 {
                bound = bound * slope;
            }
            bound = bound * l.weight.norm();
        }
        bound
    }

    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.cast(),
                    bias: l.bias.as_ref().map(Matrix::cast),
                })
                .collect(),
            activation: self.activation,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line re-evaluation of a one-hidden-layer tanh network.
    fn manual(net: &Mlp<f64>, x: &[f64]) -> Vec<f64> {
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let hidden: Vec<f64> = (0..l0.weight.cols())
            .map(|j| {
                let mut s = 0.0;
                for (i, xi) in x.iter().enumerate() {
                    s += xi * l0.weight.get(i, j);
                }
                (s + l0.bias.as_ref().unwrap().get(0, j)).tanh()
            })
            .collect();
        (0..l1.weight.cols())
            .map(|j| {
                let mut s = 0.0;
                for (i, h) in hidden.iter().enumerate() {
                    s += h * l1.weight.get(i, j);
                }
                s + l1.bias.as_ref().unwrap().get(0, j)
            })
            .collect()
    }

    #[test]
    fn forward_matches_manual_evaluation() {
        let mut rng = Rng::new(11);
        let mut net = Mlp::<f64>::new(3, &[5], 2, Activation::Tanh, true, &mut rng);
        for p in net.params_mut() {
            *p = rng.uniform_matrix(p.rows(), p.cols(), -1.0, 1.0);
        }
        let x = [0.3, -0.8, 1.7];
        let got = net.forward(&Matrix::row_vector(x.to_vec()).unwrap()).unwrap();
        for (a, b) in got.as_slice().iter().zip(manual(&net, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_forward_is_bit_identical() {
        let mut rng = Rng::new(2);
        let net = Mlp::<f64>::new(4, &[6, 3], 2, Activation::Relu, true, &mut rng);
        let x = rng.uniform_matrix::<f64>(1, 4, -2.0, 2.0);
        let mut t = Tape::new();
        let params: Vec<_> = net.params().into_iter().map(|p| t.leaf(p.clone())).collect();
        let xi = t.leaf(x.clone());
        let out = net.forward_tape(&mut t, xi, &params).unwrap();
        assert_eq!(t.value(out), &net.forward(&x).unwrap());
    }

    #[test]
    fn lipschitz_bound_holds_on_random_pairs() {
        let mut rng = Rng::new(9);
        let net = Mlp::<f64>::new(4, &[8], 3, Activation::Tanh, true, &mut rng);
        let bound = net.lipschitz_bound();
        for _ in 0..200 {
            let a = rng.uniform_matrix::<f64>(1, 4, -3.0, 3.0);
            let b = rng.uniform_matrix::<f64>(1, 4, -3.0, 3.0);
            let lhs = net.forward(&a).unwrap().distance(&net.forward(&b).unwrap()).unwrap();
            assert!(lhs <= bound * a.distance(&b).unwrap() + 1e-12);
        }
    }
}
