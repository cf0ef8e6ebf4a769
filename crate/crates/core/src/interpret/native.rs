use serde::Serialize;

use super::attribution::{AttributionVector, Provider};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::FlanModel;
use crate::numeric::{Matrix, Scalar};

/// Latent-norm importance of every feature group of `x`.
pub fn attribute_flan<T: Scalar>(model: &FlanModel<T>, x: &Matrix<T>) -> Result<AttributionVector<T>> {
    Ok(model.encode(x)?.latent_norms())
}

/// Change in the link-scale output `target` when the single binary column of
/// group `i` goes from 0 to 1.
pub fn binary_flip_effect<T: Scalar>(model: &FlanModel<T>, x: &Matrix<T>, i: usize, target: usize) -> Result<T> {
    let group = model.partition().group(i)?;
    if group.len() != 1 || !model.partition().is_binary(i) {
        return Err(Error::Contract(format!("feature group {i} is not a single binary column")));
    }
    let col = group[0];
    let mut on = x.clone();
    on.set(0, col, T::one());
    let mut off = x.clone();
    off.set(0, col, T::zero());
    let p_on = model.link_value(&model.predict(&on)?, target)?;
    let p_off = model.link_value(&model.predict(&off)?, target)?;
    Ok(p_on - p_off)
}

/// Link-scale outputs when only the groups in `keep` enter the latent sum.
pub fn partial_probabilities<T: Scalar>(model: &FlanModel<T>, x: &Matrix<T>, keep: &[usize]) -> Result<Vec<T>> {
    let bundle = model.encode(x)?;
    let out = model.partial_forward(&bundle, keep)?;
    Ok(model.probabilities(&out).into_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanImportance<T> {
    /// Mean latent norm per feature.
    pub raw: AttributionVector<T>,
    /// Mean of per-sample norms rescaled to sum to one (all-zero samples
    /// contribute zeros).
    pub normalized: AttributionVector<T>,
    pub samples: usize,
}

/// Average latent-norm importance over the given rows (running mean).
pub fn mean_importance<T: Scalar>(model: &FlanModel<T>, dataset: &Dataset<T>, rows: &[usize]) -> Result<MeanImportance<T>> {
    if rows.is_empty() {
        return Err(Error::Contract("mean importance over an empty set".into()));
    }
    let n = model.n_features();
    let mut raw = vec![T::zero(); n];
    let mut normalized = vec![T::zero(); n];
    for (k, &i) in rows.iter().enumerate() {
        let scores = attribute_flan(model, &dataset.sample(i)?)?.scores;
        let total = scores.iter().fold(T::zero(), |a, &s| a + s);
        let count = T::from_count(k + 1);
        for f in 0..n {
            raw[f] = raw[f] + (scores[f] - raw[f]) / count;
            let share = if total > T::zero() { scores[f] / total } else { T::zero() };
            normalized[f] = normalized[f] + (share - normalized[f]) / count;
        }
    }
    Ok(MeanImportance {
        raw: AttributionVector::group(Provider::FlanNorm, raw, 0),
        normalized: AttributionVector::group(Provider::FlanNorm, normalized, 0),
        samples: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, Generator, SyntheticSpec};
    use crate::model::{Activation, EncoderSpec, FeaturePartition, OutputKind, PredictorSpec, Sharing};
    use crate::numeric::{tape::sigmoid, Rng};

    fn planted(n: usize) -> Dataset<f64> {
        generate(&SyntheticSpec {
            generator: Generator::PlantedRelevance,
            n_samples: n,
            n_features: 4,
            n_irrelevant: 1,
            noise_std: 0.0,
            seed: 3,
        })
        .unwrap()
    }

    fn model(seed: u64, partition: FeaturePartition) -> FlanModel<f64> {
        FlanModel::new(
            partition,
            EncoderSpec {
                latent_dim: 3,
                hidden: vec![4],
                activation: Activation::Tanh,
                sharing: Sharing::Distinct,
                bias: false,
            },
            PredictorSpec {
                hidden: vec![4],
                activation: Activation::Tanh,
                bias: true,
            },
            OutputKind::BinaryLogit,
            &mut Rng::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn single_sample_mean_is_its_attribution() {
        let data = planted(5);
        let m = model(1, data.partition.clone());
        let mean = mean_importance(&m, &data, &[2]).unwrap();
        assert_eq!(mean.raw.scores, attribute_flan(&m, &data.sample(2).unwrap()).unwrap().scores);
        let s: f64 = mean.normalized.scores.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(mean_importance(&m, &data, &[]).is_err());
    }

    #[test]
    fn zero_column_with_bias_free_encoder_has_zero_mean() {
        let mut data = planted(20);
        for r in 0..20 {
            data.inputs.set(r, 3, 0.0);
        }
        let m = model(2, data.partition.clone());
        let rows: Vec<usize> = (0..20).collect();
        assert_eq!(mean_importance(&m, &data, &rows).unwrap().raw.scores[3], 0.0);
    }

    #[test]
    fn running_mean_matches_two_pass() {
        let data = planted(200);
        let m = model(3, data.partition.clone());
        let rows: Vec<usize> = (0..200).collect();
        let mean = mean_importance(&m, &data, &rows).unwrap();
        let mut sums = [0.0; 4];
        for &r in &rows {
            for (f, s) in attribute_flan(&m, &data.sample(r).unwrap()).unwrap().scores.iter().enumerate() {
                sums[f] += s;
            }
        }
        for f in 0..4 {
            assert!((mean.raw.scores[f] - sums[f] / 200.0).abs() < 1e-12);
        }
    }

    fn one_feature(w: f64, a: f64) -> FlanModel<f64> {
        FlanModel::linear(
            FeaturePartition::per_column(1).with_binary(vec![true]).unwrap(),
            vec![Matrix::scalar(w)],
            Matrix::scalar(a),
            None,
            OutputKind::BinaryLogit,
        )
        .unwrap()
    }

    #[test]
    fn flip_effect_closed_form() {
        let m = one_feature(1.5, -0.75);
        let x = Matrix::scalar(0.0);
        let got = binary_flip_effect(&m, &x, 0, 0).unwrap();
        assert_eq!(got, sigmoid(1.5 * -0.75) - 0.5);

        let dead = one_feature(0.0, 2.0);
        assert_eq!(binary_flip_effect(&dead, &x, 0, 0).unwrap(), 0.0);

        let cont = FlanModel::linear(
            FeaturePartition::per_column(1),
            vec![Matrix::scalar(1.0)],
            Matrix::scalar(1.0),
            None,
            OutputKind::BinaryLogit,
        )
        .unwrap();
        assert!(binary_flip_effect(&cont, &x, 0, 0).is_err());
    }

    #[test]
    fn flip_effect_on_logit_scale_ignores_other_features() {
        let p = FeaturePartition::per_column(3).with_binary(vec![true, false, false]).unwrap();
        let m = FlanModel::linear(
            p,
            vec![Matrix::scalar(0.8), Matrix::scalar(-1.2), Matrix::scalar(0.4)],
            Matrix::scalar(1.0),
            None,
            OutputKind::Regression { outputs: 1 },
        )
        .unwrap();
        let a: f64 = binary_flip_effect(&m, &Matrix::row_vector(vec![0.0, 0.3, -2.0]).unwrap(), 0, 0).unwrap();
        let b = binary_flip_effect(&m, &Matrix::row_vector(vec![1.0, 1.5, 4.0]).unwrap(), 0, 0).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!((a - 0.8).abs() < 1e-15);
    }
}
