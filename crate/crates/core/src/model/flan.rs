use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Dense, Mlp};
use super::partition::FeaturePartition;
use crate::error::{Error, Result};
use crate::interpret::{AttributionVector, Provider};
use crate::numeric::{tape::sigmoid, Matrix, NodeId, Rng, Scalar, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Sharing {
    /// One encoder network per feature group.
    Distinct,
    /// One network for all groups; each group's (zero-padded) values are
    /// concatenated with a trainable positional code of `code_dim` entries.
    Shared { code_dim: usize },
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EncoderSpec {
    pub latent_dim: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub sharing: Sharing,
    #[serde(default = "default_true")]
    pub bias: bool,
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("encoder.latent-dim", "must be at least 1"));
        }
        if let Sharing::Shared { code_dim } = self.sharing {
            if code_dim == 0 {
                return Err(Error::config("encoder.sharing.code-dim", "must be at least 1"));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("encoder.hidden", "hidden sizes must be positive"));
        }
        Ok(())
    }

    pub fn positional_code_dim(&self) -> usize {
        match self.sharing {
            Sharing::Distinct => 0,
            Sharing::Shared { code_dim } => code_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PredictorSpec {
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default = "default_true")]
    pub bias: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum OutputKind {
    /// Single logit with a logistic link.
    BinaryLogit,
    /// One logit per class with a softmax link.
    ClassLogits { classes: usize },
    Regression { outputs: usize },
}

impl OutputKind {
    pub fn outputs(self) -> usize {
        match self {
            OutputKind::BinaryLogit => 1,
            OutputKind::ClassLogits { classes } => classes,
            OutputKind::Regression { outputs } => outputs,
        }
    }

    /// Number of classes a label can take (0 for regression).
    pub fn classes(self) -> usize {
        match self {
            OutputKind::BinaryLogit => 2,
            OutputKind::ClassLogits { classes } => classes,
            OutputKind::Regression { .. } => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Encoders<T> {
    Distinct(Vec<Mlp<T>>),
    Shared { net: Mlp<T>, codes: Vec<Matrix<T>> },
}

/// Per-feature latents `z_i` and their aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBundle<T> {
    per_feature: Vec<Matrix<T>>,
    total: Matrix<T>,
}

impl<T: Scalar> LatentBundle<T> {
    /// Builds a bundle, summing in ascending feature order.
    pub fn new(per_feature: Vec<Matrix<T>>) -> Result<Self> {
        let first = per_feature
            .first()
            .ok_or_else(|| Error::Contract("a latent bundle needs at least one feature".into()))?;
        let total = sum_latents(first.cols(), per_feature.iter())?;
        Ok(Self { per_feature, total })
    }

    pub fn len(&self) -> usize {
        self.per_feature.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_feature.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.total.cols()
    }

    pub fn features(&self) -> &[Matrix<T>] {
        &self.per_feature
    }

    pub fn feature(&self, i: usize) -> Result<&Matrix<T>> {
        self.per_feature.get(i).ok_or(Error::Index {
            what: "feature group",
            index: i,
            len: self.per_feature.len(),
        })
    }

    pub fn total(&self) -> &Matrix<T> {
        &self.total
    }

    /// Sum of the latents in `keep`, ascending index, starting from zero.
    pub fn partial_sum(&self, keep: &[usize]) -> Result<Matrix<T>> {
        let mut idx = keep.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Index {
                what: "feature group",
                index: bad,
                len: self.len(),
            });
        }
        sum_latents(self.latent_dim(), idx.iter().map(|&i| &self.per_feature[i]))
    }

    pub fn sum_except(&self, skip: usize) -> Result<Matrix<T>> {
        self.feature(skip)?;
        let keep: Vec<usize> = (0..self.len()).filter(|&j| j != skip).collect();
        self.partial_sum(&keep)
    }

    /// `||z_i||_2` per feature.
    pub fn latent_norms(&self) -> AttributionVector<T> {
        AttributionVector::group(
            Provider::FlanNorm,
            self.per_feature.iter().map(Matrix::norm).collect(),
            0,
        )
    }
}

fn sum_latents<'a, T: Scalar>(
    dim: usize,
    items: impl Iterator<Item = &'a Matrix<T>>,
) -> Result<Matrix<T>> {
    let mut acc = Matrix::zeros(1, dim);
    for z in items {
        acc.add_assign(z)?;
    }
    Ok(acc)
}

/// Tape handles produced by [`FlanModel::forward_tape`].
#[derive(Clone, Debug)]
pub struct TapeForward {
    pub outputs: NodeId,
    pub latents: Vec<NodeId>,
    pub total: NodeId,
}

/// `psi(sum_i phi_i(x_i))`: per-group encoders into a shared latent space,
/// summed, then a predictor network.
#[derive(Clone, Debug, PartialEq)]
pub struct FlanModel<T> {
    partition: FeaturePartition,
    encoder_spec: EncoderSpec,
    predictor_spec: PredictorSpec,
    output: OutputKind,
    encoders: Encoders<T>,
    predictor: Mlp<T>,
}

impl<T: Scalar> FlanModel<T> {
    /// Randomly initialised model.
    pub fn new(
        partition: FeaturePartition,
        encoder_spec: EncoderSpec,
        predictor_spec: PredictorSpec,
        output: OutputKind,
        rng: &mut Rng,
    ) -> Result<Self> {
        encoder_spec.validate()?;
        let d = encoder_spec.latent_dim;
        let encoders = match encoder_spec.sharing {
            Sharing::Distinct => Encoders::Distinct(
                partition
                    .groups()
                    .iter()
                    .map(|g| {
                        Mlp::new(
                            g.len(),
                            &encoder_spec.hidden,
                            d,
                            encoder_spec.activation,
                            encoder_spec.bias,
                            rng,
                        )
                    })
                    .collect(),
            ),
            Sharing::Shared { code_dim } => {
                let net = Mlp::new(
                    partition.max_group_width() + code_dim,
                    &encoder_spec.hidden,
                    d,
                    encoder_spec.activation,
                    encoder_spec.bias,
                    rng,
                );
                let codes = (0..partition.len())
                    .map(|_| rng.uniform_matrix(1, code_dim, -1.0, 1.0))
                    .collect();
                Encoders::Shared { net, codes }
            }
        };
        let predictor = Mlp::new(
            d,
            &predictor_spec.hidden,
            output.outputs(),
            predictor_spec.activation,
            predictor_spec.bias,
            rng,
        );
        Self::from_parts(partition, encoder_spec, predictor_spec, output, encoders, predictor)
    }

    pub fn from_parts(
        partition: FeaturePartition,
        encoder_spec: EncoderSpec,
        predictor_spec: PredictorSpec,
        output: OutputKind,
        encoders: Encoders<T>,
        predictor: Mlp<T>,
    ) -> Result<Self> {
        let m = Self {
            partition,
            encoder_spec,
            predictor_spec,
            output,
            encoders,
            predictor,
        };
        m.validate()?;
        Ok(m)
    }

    /// Bias-free linear encoders `x_i W_i` and a linear predictor
    /// `z A (+ b)`.
    pub fn linear(
        partition: FeaturePartition,
        encoder_weights: Vec<Matrix<T>>,
        predictor_weight: Matrix<T>,
        predictor_bias: Option<Matrix<T>>,
        output: OutputKind,
    ) -> Result<Self> {
        let d = predictor_weight.rows();
        let bias = predictor_bias.is_some();
        let encoders = encoder_weights
            .into_iter()
            .map(|w| Mlp::from_layers(vec![Dense::new(w, None)?], Activation::Identity))
            .collect::<Result<Vec<_>>>()?;
        let predictor = Mlp::from_layers(vec![Dense::new(predictor_weight, predictor_bias)?], Activation::Identity)?;
        Self::from_parts(
            partition,
            EncoderSpec {
                latent_dim: d,
                hidden: vec![],
                activation: Activation::Identity,
                sharing: Sharing::Distinct,
                bias: false,
            },
            PredictorSpec {
                hidden: vec![],
                activation: Activation::Identity,
                bias,
            },
            output,
            Encoders::Distinct(encoders),
            predictor,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_spec.validate()?;
        self.partition.validate()?;
        let d = self.encoder_spec.latent_dim;
        match &self.encoders {
            Encoders::Distinct(nets) => {
                if nets.len() != self.partition.len() {
                    return Err(Error::Contract(format!(
                        "{} encoders for {} feature groups",
                        nets.len(),
                        self.partition.len()
                    )));
                }
                for (i, (net, g)) in nets.iter().zip(self.partition.groups()).enumerate() {
                    if net.output_dim() != d || net.input_dim() != g.len() {
                        return Err(Error::Contract(format!(
                            "encoder {i} maps {} -> {}, expected {} -> {d}",
                            net.input_dim(),
                            net.output_dim(),
                            g.len()
                        )));
                    }
                }
            }
            Encoders::Shared { net, codes } => {
                let code_dim = self.encoder_spec.positional_code_dim();
                if code_dim == 0 {
                    return Err(Error::Contract("shared encoder needs a positional code".into()));
                }
                if codes.len() != self.partition.len() {
                    return Err(Error::Contract("one positional code per group required".into()));
                }
                if codes.iter().any(|c| c.shape() != (1, code_dim)) {
                    return Err(Error::Contract("positional code has the wrong width".into()));
                }
                if net.input_dim() != self.partition.max_group_width() + code_dim || net.output_dim() != d {
                    return Err(Error::Contract("shared encoder has the wrong shape".into()));
                }
                for i in 0..codes.len() {
                    for j in i + 1..codes.len() {
                        if codes[i] == codes[j] {
                            return Err(Error::Contract(format!(
                                "positional codes {i} and {j} coincide"
                            )));
                        }
                    }
                }
            }
        }
        if self.predictor.input_dim() != d || self.predictor.output_dim() != self.output.outputs() {
            return Err(Error::Contract(format!(
                "predictor maps {} -> {}, expected {d} -> {}",
                self.predictor.input_dim(),
                self.predictor.output_dim(),
                self.output.outputs()
            )));
        }
        Ok(())
    }

    pub fn partition(&self) -> &FeaturePartition {
        &self.partition
    }

    pub fn encoder_spec(&self) -> &EncoderSpec {
        &self.encoder_spec
    }

    pub fn predictor_spec(&self) -> &PredictorSpec {
        &self.predictor_spec
    }

    pub fn output_kind(&self) -> OutputKind {
        self.output
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder_spec.latent_dim
    }

    pub fn n_features(&self) -> usize {
        self.partition.len()
    }

    pub fn raw_dim(&self) -> usize {
        self.partition.raw_dim()
    }

    pub fn encoders(&self) -> &Encoders<T> {
        &self.encoders
    }

    pub fn encoders_mut(&mut self) -> &mut Encoders<T> {
        &mut self.encoders
    }

    pub fn predictor(&self) -> &Mlp<T> {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut Mlp<T> {
        &mut self.predictor
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.shape() != (1, self.raw_dim()) {
            return Err(Error::Shape {
                op: "model input",
                left: x.shape(),
                right: (1, self.raw_dim()),
            });
        }
        Ok(())
    }

    /// The encoder input for group `i`: the group's raw values, zero-padded
    /// and followed by the positional code when the encoder is shared.
    fn group_input(&self, i: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
        let values = x.gather_cols(self.partition.group(i)?)?;
        match &self.encoders {
            Encoders::Distinct(_) => Ok(values),
            Encoders::Shared { codes, .. } => {
                let pad = self.partition.max_group_width() - values.cols();
                values.concat_cols(&Matrix::zeros(1, pad))?.concat_cols(&codes[i])
            }
        }
    }

    fn encoder(&self, i: usize) -> &Mlp<T> {
        match &self.encoders {
            Encoders::Distinct(nets) => &nets[i],
            Encoders::Shared { net, .. } => net,
        }
    }

    pub fn encode_feature(&self, i: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let input = self.group_input(i, x)?;
        self.encoder(i).forward(&input)
    }

    pub fn encode(&self, x: &Matrix<T>) -> Result<LatentBundle<T>> {
        self.check_input(x)?;
        let per_feature = (0..self.n_features())
            .map(|i| self.encode_feature(i, x))
            .collect::<Result<Vec<_>>>()?;
        LatentBundle::new(per_feature)
    }

    /// Ascending-order sum of latents.
    pub fn aggregate(&self, latents: &[Matrix<T>]) -> Result<Matrix<T>> {
        sum_latents(self.latent_dim(), latents.iter())
    }

    /// Applies the predictor to an aggregated latent.
    pub fn predict_latent(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        self.predictor.forward(z)
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, LatentBundle<T>)> {
        let bundle = self.encode(x)?;
        let out = self.predict_latent(bundle.total())?;
        Ok((out, bundle))
    }

    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Prediction from the latents in `keep` only.
    pub fn partial_forward(&self, bundle: &LatentBundle<T>, keep: &[usize]) -> Result<Matrix<T>> {
        self.predict_latent(&bundle.partial_sum(keep)?)
    }

    /// `psi(z_i)`: the prediction made from feature `i` alone.
    pub fn feature_effect(&self, bundle: &LatentBundle<T>, i: usize) -> Result<Matrix<T>> {
        self.predict_latent(bundle.feature(i)?)
    }

    /// `||(psi(z* + z_i) - psi(z*)) - psi(z_i)||` where `z*` sums every other
    /// feature.
    pub fn taylor_residual(&self, bundle: &LatentBundle<T>, i: usize) -> Result<T> {
        let zi = bundle.feature(i)?;
        let rest = bundle.sum_except(i)?;
        let with = self.predict_latent(&rest.add(zi)?)?;
        let without = self.predict_latent(&rest)?;
        let alone = self.predict_latent(zi)?;
        Ok(with.sub(&without)?.sub(&alone)?.norm())
    }

    /// Link-transformed outputs: `[1 - p, p]` for binary, softmax for
    /// multiclass, identity for regression.
    pub fn probabilities(&self, outputs: &Matrix<T>) -> Matrix<T> {
        match self.output {
            OutputKind::BinaryLogit => {
                let p = sigmoid(outputs.get(0, 0));
                Matrix::from_vec(1, 2, vec![T::one() - p, p]).expect("finite")
            }
            OutputKind::ClassLogits { .. } => outputs.softmax_rows(),
            OutputKind::Regression { .. } => outputs.clone(),
        }
    }

    /// Link-scale value of output `target` (for binary: probability of the
    /// positive class).
    pub fn link_value(&self, outputs: &Matrix<T>, target: usize) -> Result<T> {
        if target >= self.output.outputs() {
            return Err(Error::Index {
                what: "output",
                index: target,
                len: self.output.outputs(),
            });
        }
        Ok(match self.output {
            OutputKind::BinaryLogit => sigmoid(outputs.get(0, 0)),
            OutputKind::ClassLogits { .. } => outputs.softmax_rows().get(0, target),
            OutputKind::Regression { .. } => outputs.get(0, target),
        })
    }

    /// Predicted class index (binary: logit > 0).
    pub fn predicted_class(&self, outputs: &Matrix<T>) -> usize {
        match self.output {
            OutputKind::BinaryLogit => usize::from(outputs.get(0, 0) > T::zero()),
            _ => {
                let row = outputs.as_slice();
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            }
        }
    }

    /// Parameters in declaration order: encoders (per layer weight, bias),
    /// positional codes when shared, then the predictor.
    pub fn params(&self) -> Vec<&Matrix<T>> {
        let mut out = Vec::new();
        match &self.encoders {
            Encoders::Distinct(nets) => nets.iter().for_each(|n| out.extend(n.params())),
            Encoders::Shared { net, codes } => {
                out.extend(net.params());
                out.extend(codes.iter());
            }
        }
        out.extend(self.predictor.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out = Vec::new();
        match &mut self.encoders {
            Encoders::Distinct(nets) => nets.iter_mut().for_each(|n| out.extend(n.params_mut())),
            Encoders::Shared { net, codes } => {
                out.extend(net.params_mut());
                out.extend(codes.iter_mut());
            }
        }
        out.extend(self.predictor.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    pub fn scalar_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn register_params(&self, t: &mut Tape<T>) -> Vec<NodeId> {
        self.params().into_iter().map(|p| t.leaf(p.clone())).collect()
    }

    /// Records the full forward pass. `params` come from
    /// [`FlanModel::register_params`] on the same tape.
    pub fn forward_tape(&self, t: &mut Tape<T>, x: NodeId, params: &[NodeId]) -> Result<TapeForward> {
        if params.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "expected {} parameter nodes, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if t.value(x).shape() != (1, self.raw_dim()) {
            return Err(Error::Shape {
                op: "model input",
                left: t.value(x).shape(),
                right: (1, self.raw_dim()),
            });
        }
        let mut latents = Vec::with_capacity(self.n_features());
        let mut offset = 0;
        match &self.encoders {
            Encoders::Distinct(nets) => {
                for (i, net) in nets.iter().enumerate() {
                    let n = net.param_count();
                    let input = t.gather(x, self.partition.group(i)?)?;
                    latents.push(net.forward_tape(t, input, &params[offset..offset + n])?);
                    offset += n;
                }
            }
            Encoders::Shared { net, codes } => {
                let n = net.param_count();
                let net_params = &params[offset..offset + n];
                let code_nodes = &params[offset + n..offset + n + codes.len()];
                offset += n + codes.len();
                let width = self.partition.max_group_width();
                for i in 0..self.n_features() {
                    let group = self.partition.group(i)?;
                    let mut input = t.gather(x, group)?;
                    let pad = t.leaf(Matrix::zeros(1, width - group.len()));
                    input = t.concat(input, pad)?;
                    input = t.concat(input, code_nodes[i])?;
                    latents.push(net.forward_tape(t, input, net_params)?);
                }
            }
        }
        let mut total = t.leaf(Matrix::zeros(1, self.latent_dim()));
        for &z in &latents {
            total = t.add(total, z)?;
        }
        let outputs = self.predictor.forward_tape(t, total, &params[offset..])?;
        Ok(TapeForward {
            outputs,
            latents,
            total,
        })
    }

    /// Raw output `target` and its gradient with respect to the input.
    pub fn input_gradient(&self, x: &Matrix<T>, target: usize) -> Result<(T, Matrix<T>)> {
        self.check_input(x)?;
        if target >= self.output.outputs() {
            return Err(Error::Index {
                what: "output",
                index: target,
                len: self.output.outputs(),
            });
        }
        let mut t = Tape::new();
        let params = self.register_params(&mut t);
        let xi = t.leaf(x.clone());
        let fwd = self.forward_tape(&mut t, xi, &params)?;
        let picked = t.gather(fwd.outputs, &[target])?;
        let value = t.value(picked).get(0, 0);
        let grads = t.backward(picked)?;
        Ok((value, grads.get_or_zeros(xi, x)))
    }

    /// The same model with groups (and their encoders / codes) reordered.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let partition = self.partition.permuted(order)?;
        let encoders = match &self.encoders {
            Encoders::Distinct(nets) => Encoders::Distinct(order.iter().map(|&i| nets[i].clone()).collect()),
            Encoders::Shared { net, codes } => Encoders::Shared {
                net: net.clone(),
                codes: order.iter().map(|&i| codes[i].clone()).collect(),
            },
        };
        Self::from_parts(
            partition,
            self.encoder_spec.clone(),
            self.predictor_spec.clone(),
            self.output,
            encoders,
            self.predictor.clone(),
        )
    }

    pub fn cast<U: Scalar>(&self) -> FlanModel<U> {
        FlanModel {
            partition: self.partition.clone(),
            encoder_spec: self.encoder_spec.clone(),
            predictor_spec: self.predictor_spec.clone(),
            output: self.output,
            encoders: match &self.encoders {
                Encoders::Distinct(nets) => Encoders::Distinct(nets.iter().map(Mlp::cast).collect()),
                Encoders::Shared { net, codes } => Encoders::Shared {
                    net: net.cast(),
                    codes: codes.iter().map(Matrix::cast).collect(),
                },
            },
            predictor: self.predictor.cast(),
        }
    }
}
