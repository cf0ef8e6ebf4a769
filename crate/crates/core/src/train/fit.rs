use rayon::prelude::*;
use serde::Serialize;

use super::config::{lr_at, TrainConfig};
use super::optim::{adam_step, AdamState};
use super::scores::{accuracy, auc};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::model::{FlanModel, OutputKind, PartitionKind};
use crate::numeric::{tape::relu, Matrix, Scalar, Tape};

/// Loss and predictive metrics on one split. `auc` is present for binary
/// tasks whose split holds both classes.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Evaluation {
    pub n: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train: Evaluation,
    pub validation: Option<Evaluation>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalResult {
    pub series: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` when the final parameters
    /// were kept (no validation split, or zero epochs).
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: FlanModel<T>,
    pub result: EvalResult,
}

enum Target<'a, T> {
    Class(usize),
    Values(&'a [T]),
}

fn target_of<T: Scalar>(dataset: &Dataset<T>, i: usize) -> Target<'_, T> {
    match &dataset.targets {
        Targets::Classes { labels, .. } => Target::Class(labels[i]),
        Targets::Values(m) => Target::Values(m.row(i)),
    }
}

fn check_compatible<T: Scalar>(model: &FlanModel<T>, dataset: &Dataset<T>) -> Result<()> {
    if model.partition() != &dataset.partition {
        return Err(Error::Contract("model and dataset partitions differ".into()));
    }
    match (&dataset.targets, model.output_kind()) {
        (Targets::Classes { classes, .. }, kind) if kind.classes() >= 2 => {
            if *classes > kind.classes() {
                return Err(Error::Contract(format!(
                    "dataset has {classes} classes but the model outputs {}",
                    kind.classes()
                )));
            }
        }
        (Targets::Values(m), OutputKind::Regression { outputs }) if m.cols() == outputs => {}
        _ => return Err(Error::Contract("targets do not match the model output kind".into())),
    }
    Ok(())
}

/// Loss of one sample given the model's raw outputs, matching the recorded
/// training loss.
fn plain_loss<T: Scalar>(kind: OutputKind, outputs: &Matrix<T>, target: &Target<'_, T>) -> T {
    match (kind, target) {
        (OutputKind::BinaryLogit, Target::Class(c)) => {
            let z = outputs.get(0, 0);
            let y = T::from_count(*c);
            relu(z) - z * y + (-z.abs()).exp().ln_1p()
        }
        (OutputKind::ClassLogits { .. }, Target::Class(c)) => {
            let row = outputs.as_slice();
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln() + max;
            lse - row[*c]
        }
        (_, Target::Values(y)) => {
            let n = T::from_count(y.len());
            outputs.as_slice().iter().zip(*y).map(|(&o, &t)| (o - t) * (o - t)).sum::<T>() / n
        }
        _ => T::nan(),
    }
}

/// Per-sample loss and parameter gradients.
fn loss_and_grads<T: Scalar>(model: &FlanModel<T>, x: Matrix<T>, target: &Target<'_, T>) -> Result<(T, Vec<Matrix<T>>)> {
    let mut t = Tape::new();
    let params = model.register_params(&mut t);
    let xi = t.leaf(x);
    let fwd = model.forward_tape(&mut t, xi, &params)?;
    let loss = match (model.output_kind(), target) {
        (OutputKind::BinaryLogit, Target::Class(c)) => t.logistic_loss(fwd.outputs, T::from_count(*c))?,
        (OutputKind::ClassLogits { .. }, Target::Class(c)) => t.softmax_cross_entropy(fwd.outputs, *c)?,
        (OutputKind::Regression { outputs }, Target::Values(y)) => {
            let y = t.leaf(Matrix::row_vector(y.to_vec())?);
            let diff = t.sub(fwd.outputs, y)?;
            let sq = t.mul(diff, diff)?;
            let total = t.sum(sq);
            t.scale(total, T::one() / T::from_count(outputs))
        }
        _ => return Err(Error::Contract("target does not match the model output kind".into())),
    };
    let value = t.value(loss).get(0, 0);
    let mut grads = t.backward(loss)?;
    let grads = params
        .iter()
        .zip(model.params())
        .map(|(&id, p)| grads.take(id).unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols())))
        .collect();
    Ok((value, grads))
}

/// Mean loss and batch gradient over `rows`, reduced in ascending row order.
pub fn batch_loss_and_grads<T: Scalar>(
    model: &FlanModel<T>,
    dataset: &Dataset<T>,
    rows: &[usize],
) -> Result<(T, Vec<Matrix<T>>)> {
    let mut rows = rows.to_vec();
    rows.sort_unstable();
    let per: Vec<(T, Vec<Matrix<T>>)> = rows
        .par_iter()
        .map(|&i| loss_and_grads(model, dataset.inputs.row_matrix(i), &target_of(dataset, i)))
        .collect::<Result<_>>()?;
    let mut loss = T::zero();
    let mut grads: Vec<Matrix<T>> = model.params().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
    for (l, g) in &per {
        loss = loss + *l;
        for (acc, gk) in grads.iter_mut().zip(g) {
            acc.add_assign(gk)?;
        }
    }
    let inv = T::one() / T::from_count(rows.len().max(1));
    Ok((loss * inv, grads.into_iter().map(|g| g.scale(inv)).collect()))
}

/// Loss, accuracy and (binary) AUC over the given rows.
pub fn evaluate<T: Scalar>(model: &FlanModel<T>, dataset: &Dataset<T>, rows: &[usize]) -> Result<Evaluation> {
    check_compatible(model, dataset)?;
    let kind = model.output_kind();
    let per: Vec<(f64, Matrix<T>)> = rows
        .par_iter()
        .map(|&i| {
            let out = model.predict(&dataset.inputs.row_matrix(i))?;
            Ok((plain_loss(kind, &out, &target_of(dataset, i)).to_f64_lossy(), out))
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    let loss = if n == 0 {
        0.0
    } else {
        per.iter().map(|p| p.0).sum::<f64>() / n as f64
    };
    let mut eval = Evaluation {
        n,
        loss,
        accuracy: None,
        auc: None,
    };
    if let Targets::Classes { labels, .. } = &dataset.targets {
        let truth: Vec<usize> = rows.iter().map(|&i| labels[i]).collect();
        if n > 0 {
            let predicted: Vec<usize> = per.iter().map(|p| model.predicted_class(&p.1)).collect();
            eval.accuracy = Some(accuracy(&predicted, &truth)?);
        }
        if kind == OutputKind::BinaryLogit {
            let scores: Vec<f64> = per.iter().map(|p| p.1.get(0, 0).to_f64_lossy()).collect();
            eval.auc = match auc(&scores, &truth) {
                Ok(a) => Some(a),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
        }
    }
    Ok(eval)
}

/// Model-selection score on the validation split; higher is better.
fn selection_score(kind: OutputKind, eval: &Evaluation) -> f64 {
    match kind {
        OutputKind::BinaryLogit => eval.auc.or(eval.accuracy).unwrap_or(-eval.loss),
        OutputKind::ClassLogits { .. } => eval.accuracy.unwrap_or(-eval.loss),
        OutputKind::Regression { .. } => -eval.loss,
    }
}

/// Minibatch training. Shuffling is seeded from `config.seed`; the model's
/// initialisation is the caller's. With a validation split the parameters of
/// the best validation epoch are returned and training stops after
/// `early_stop_patience` epochs without improvement.
pub fn train<T: Scalar>(model: &FlanModel<T>, dataset: &Dataset<T>, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_compatible(model, dataset)?;
    let mut model = model.clone();
    let mut result = EvalResult::default();
    if config.epochs == 0 {
        return Ok(TrainOutcome { model, result });
    }
    if dataset.splits.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let tabular = matches!(dataset.partition.kind(), PartitionKind::PerColumn);
    let batch_size = config.batch_size_for(tabular);
    let mut rng = crate::numeric::Rng::stream(config.seed, 0x7EA1);
    let mut state = AdamState::new(model.params());
    let mut order = dataset.splits.train.clone();
    let mut step = 0;
    let mut best: Option<(f64, usize, FlanModel<T>)> = None;
    for epoch in 0..config.epochs {
        let lr = lr_at(config, epoch);
        rng.shuffle(&mut order);
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let (loss, grads) = batch_loss_and_grads(&model, dataset, batch)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: non-finite loss at epoch {epoch}, batch {b}"
                )));
            }
            step += 1;
            adam_step(&mut model.params_mut(), &grads, &mut state, config, lr, step)?;
        }
        let train_eval = evaluate(&model, dataset, &dataset.splits.train)?;
        let validation = if dataset.splits.validation.is_empty() {
            None
        } else {
            Some(evaluate(&model, dataset, &dataset.splits.validation)?)
        };
        log::debug!("epoch {epoch}: train loss {:.6}", train_eval.loss);
        let score = validation.as_ref().map(|v| selection_score(model.output_kind(), v));
        result.series.push(EpochRecord {
            epoch,
            lr,
            train: train_eval,
            validation,
        });
        if let Some(score) = score {
            let improved = best.as_ref().is_none_or(|(s, _, _)| score > *s);
            if improved {
                best = Some((score, epoch, model.clone()));
            } else if let (Some(patience), Some((_, at, _))) = (config.early_stop_patience, &best) {
                if epoch - at >= patience {
                    result.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, epoch, kept)) = best {
        model = kept;
        result.best_epoch = Some(epoch);
    }
    Ok(TrainOutcome { model, result })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, Generator, SplitSpec, SyntheticSpec};
    use crate::model::{Activation, EncoderSpec, PredictorSpec, Sharing};
    use crate::numeric::{finite_diff_gradient, Rng};
    use crate::train::Optimizer;

    fn xor() -> Dataset<f64> {
        generate(&SyntheticSpec {
            generator: Generator::Xor,
            n_samples: 4,
            n_features: 2,
            n_irrelevant: 0,
            noise_std: 0.0,
            seed: 0,
        })
        .unwrap()
    }

    fn flan(partition: &crate::model::FeaturePartition, d: usize, hidden: usize, seed: u64) -> FlanModel<f64> {
        FlanModel::new(
            partition.clone(),
            EncoderSpec {
                latent_dim: d,
                hidden: vec![hidden],
                activation: Activation::Tanh,
                sharing: Sharing::Distinct,
                bias: true,
            },
            PredictorSpec {
                hidden: vec![hidden],
                activation: Activation::Tanh,
                bias: true,
            },
            OutputKind::BinaryLogit,
            &mut Rng::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let data = xor();
        let m = flan(&data.partition, 4, 8, 1);
        let out = train(&m, &data, &TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
        assert_eq!(out.model, m);
        assert!(out.result.series.is_empty());
    }

    #[test]
    fn learns_xor_exactly() {
        let data = xor();
        let m = flan(&data.partition, 4, 8, 2);
        let cfg = TrainConfig {
            epochs: 2000,
            lr: 0.001,
            ..TrainConfig::default()
        };
        let out = train(&m, &data, &cfg).unwrap();
        assert_eq!(out.result.series.last().unwrap().train.accuracy, Some(1.0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let data = generate(&SyntheticSpec {
            generator: Generator::Interaction,
            n_samples: 80,
            n_features: 3,
            n_irrelevant: 1,
            noise_std: 0.1,
            seed: 4,
        })
        .unwrap()
        .resplit(&SplitSpec::default(), 4)
        .unwrap();
        let m = flan(&data.partition, 3, 4, 9);
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: Some(8),
            optimizer: Optimizer::AdamW,
            weight_decay: 0.01,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(&m, &data, &cfg).unwrap();
        let b = train(&m, &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.result, b.result);
        let c = train(&m, &data, &TrainConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let data = xor();
        let m = flan(&data.partition, 2, 3, 5);
        let rows = [0, 1, 2, 3];
        let (_, grads) = batch_loss_and_grads(&m, &data, &rows).unwrap();
        let flat: Vec<f64> = m.params().iter().flat_map(|p| p.as_slice().to_vec()).collect();
        let loss_at = |theta: &Matrix<f64>| -> f64 {
            let theta = theta.as_slice();
            let mut probe = m.clone();
            let mut k = 0;
            for p in probe.params_mut() {
                for v in p.as_mut_slice() {
                    *v = theta[k];
                    k += 1;
                }
            }
            batch_loss_and_grads(&probe, &data, &rows).unwrap().0
        };
        let fd = finite_diff_gradient(loss_at, &Matrix::row_vector(flat).unwrap(), 1e-6).unwrap();
        let ad: Vec<f64> = grads.iter().flat_map(|g| g.as_slice().to_vec()).collect();
        for (a, f) in ad.iter().zip(fd.as_slice()) {
            assert!((a - f).abs() <= 1e-6 * (1.0 + f.abs()), "{a} vs {f}");
        }
    }

    #[test]
    fn diverging_run_reports_epoch_and_batch() {
        let data = xor();
        let mut m = flan(&data.partition, 2, 3, 5);
        for p in m.params_mut() {
            for v in p.as_mut_slice() {
                *v = 1e308;
            }
        }
        let err = train(&m, &data, &TrainConfig { epochs: 3, ..TrainConfig::default() }).unwrap_err();
        assert!(matches!(err, Error::Numeric(ref s) if s.contains("epoch 0, batch 0")), "{err}");
    }

    #[test]
    fn early_stopping_keeps_best_checkpoint() {
        let data = generate(&SyntheticSpec {
            generator: Generator::PlantedRelevance,
            n_samples: 120,
            n_features: 4,
            n_irrelevant: 2,
            noise_std: 0.5,
            seed: 1,
        })
        .unwrap()
        .resplit(&SplitSpec::default(), 1)
        .unwrap();
        let m = flan(&data.partition, 3, 4, 3);
        let cfg = TrainConfig {
            epochs: 400,
            lr: 0.01,
            early_stop_patience: Some(5),
            ..TrainConfig::default()
        };
        let out = train(&m, &data, &cfg).unwrap();
        let best = out.result.best_epoch.unwrap();
        let best_val = out.result.series[best].validation.as_ref().unwrap().auc.unwrap();
        for rec in &out.result.series {
            assert!(rec.validation.as_ref().unwrap().auc.unwrap() <= best_val);
        }
        if out.result.stopped_early {
            assert_eq!(out.result.series.len(), best + 6);
        }
        let kept = evaluate(&out.model, &data, &data.splits.validation).unwrap();
        assert_eq!(kept.auc, Some(best_val));
    }

    #[test]
    fn zero_learning_rate_step_only_moves_moments() {
        let data = xor();
        let mut m = flan(&data.partition, 2, 3, 8);
        let before = m.clone();
        let (_, grads) = batch_loss_and_grads(&m, &data, &[0, 1, 2, 3]).unwrap();
        let mut state = AdamState::new(m.params());
        let cfg = TrainConfig {
            optimizer: Optimizer::AdamW,
            weight_decay: 0.1,
            ..TrainConfig::default()
        };
        adam_step(&mut m.params_mut(), &grads, &mut state, &cfg, 0.0, 1).unwrap();
        assert_eq!(m, before);
        assert!(state.m.iter().any(|mm| mm.as_slice().iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn tiny_step_does_not_increase_batch_loss() {
        let data = xor();
        let mut rng = Rng::new(77);
        for trial in 0..100 {
            let mut m = flan(&data.partition, 1 + rng.below(3), 1 + rng.below(4), trial);
            let rows = [0, 1, 2, 3];
            let (before, grads) = batch_loss_and_grads(&m, &data, &rows).unwrap();
            let mut state = AdamState::new(m.params());
            adam_step(&mut m.params_mut(), &grads, &mut state, &TrainConfig::default(), 1e-6, 1).unwrap();
            let (after, _) = batch_loss_and_grads(&m, &data, &rows).unwrap();
            assert!(after <= before, "trial {trial}: {before} -> {after}");
        }
    }
}
