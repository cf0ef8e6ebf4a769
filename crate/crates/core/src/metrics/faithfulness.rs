use serde::Serialize;

use crate::error::{Error, Result};
use crate::interpret::{AttributionVector, Provider};
use crate::model::FlanModel;
use crate::numeric::{Matrix, Scalar};

/// `|f(x) - f(x without i)|` per feature group on the link scale of output
/// `target`. FLAN removal drops the group's latent from the sum; post-hoc
/// removal substitutes the baseline's values for the group's dimensions.
pub fn removal_effects<T: Scalar>(
    model: &FlanModel<T>,
    x: &Matrix<T>,
    provider: Provider,
    baseline: &Matrix<T>,
    target: usize,
) -> Result<Vec<T>> {
    let (out, bundle) = model.forward(x)?;
    let full = model.link_value(&out, target)?;
    (0..model.n_features())
        .map(|i| {
            let without = if provider.is_post_hoc() {
                let mut masked = x.clone();
                for &d in model.partition().group(i)? {
                    masked.set(0, d, baseline.get(0, d));
                }
                model.predict(&masked)?
            } else {
                let keep: Vec<usize> = (0..model.n_features()).filter(|&j| j != i).collect();
                model.partial_forward(&bundle, &keep)?
            };
            Ok((full - model.link_value(&without, target)?).abs())
        })
        .collect()
}

/// Midranks (1-based, ties share their average rank).
pub fn midranks<T: Scalar>(values: &[T]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            ranks[i] = rank;
        }
        start = end + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankCorrelation {
    pub value: f64,
    /// One side had constant ranks; `value` is then 0.
    pub degenerate: bool,
}

/// Spearman correlation: Pearson correlation of midranks.
pub fn spearman<T: Scalar>(a: &[T], b: &[T]) -> Result<RankCorrelation> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("{} vs {} values", a.len(), b.len())));
    }
    let (ra, rb) = (midranks(a), midranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if a.len() < 2 || saa == 0.0 || sbb == 0.0 {
        return Ok(RankCorrelation {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(RankCorrelation {
        value: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Group-level magnitudes of an attribution.
pub fn group_magnitudes<T: Scalar>(model: &FlanModel<T>, attribution: &AttributionVector<T>) -> Result<Vec<T>> {
    Ok(attribution.to_groups(model.partition())?.magnitudes())
}

/// Rank agreement between attribution magnitudes and removal effects.
pub fn monotonicity<T: Scalar>(
    model: &FlanModel<T>,
    x: &Matrix<T>,
    attribution: &AttributionVector<T>,
    baseline: &Matrix<T>,
) -> Result<RankCorrelation> {
    let scores = group_magnitudes(model, attribution)?;
    let effects = removal_effects(model, x, attribution.provider, baseline, attribution.target)?;
    spearman(&scores, &effects)
}

/// Size of the symmetric difference between `{i : |score_i| <= tol}` and
/// `{i : effect_i <= effect_tol}`.
pub fn non_sensitivity_count<T: Scalar>(scores: &[T], effects: &[T], tol: T, effect_tol: T) -> Result<usize> {
    if scores.len() != effects.len() {
        return Err(Error::Contract(format!("{} scores vs {} effects", scores.len(), effects.len())));
    }
    if !(tol >= T::zero() && effect_tol >= T::zero()) {
        return Err(Error::Contract("tolerances must be non-negative".into()));
    }
    Ok(scores
        .iter()
        .zip(effects)
        .filter(|(s, e)| (s.abs() <= tol) != (**e <= effect_tol))
        .count())
}

pub fn non_sensitivity<T: Scalar>(
    model: &FlanModel<T>,
    x: &Matrix<T>,
    attribution: &AttributionVector<T>,
    baseline: &Matrix<T>,
    tol: T,
    effect_tol: T,
) -> Result<usize> {
    let scores = group_magnitudes(model, attribution)?;
    let effects = removal_effects(model, x, attribution.provider, baseline, attribution.target)?;
    non_sensitivity_count(&scores, &effects, tol, effect_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, Generator, SyntheticSpec};
    use crate::interpret::{attribute_flan, saliency};
    use crate::model::{FeaturePartition, OutputKind};
    use crate::numeric::Rng;
    use proptest::prelude::*;

    /// Rank correlation from the textbook formula on tie-free data.
    fn spearman_oracle(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter().map(|x| 1.0 + v.iter().filter(|y| *y < x).count() as f64).collect()
        };
        let (ra, rb) = (rank(a), rank(b));
        let n = a.len() as f64;
        let d2: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - y) * (x - y)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    #[test]
    fn identical_and_reversed_rankings() {
        let e = [0.1, 0.5, 0.3, 0.9];
        assert_eq!(spearman(&e, &e).unwrap().value, 1.0);
        let rev = [0.9, 0.1, 0.5, 0.0];
        assert_eq!(spearman(&e, &rev).unwrap().value, -1.0);
        let flat = spearman(&[1.0, 1.0, 1.0], &[0.1, 0.2, 0.3]).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.value, 0.0);
    }

    fn linear_model(weights: &[f64]) -> FlanModel<f64> {
        let d = 2;
        let mut rng = Rng::new(9);
        FlanModel::linear(
            FeaturePartition::per_column(weights.len()),
            weights
                .iter()
                .map(|&w| Matrix::from_vec(1, d, vec![w, -0.5 * w]).unwrap())
                .collect(),
            rng.uniform_matrix(d, 1, -1.0, 1.0),
            None,
            OutputKind::BinaryLogit,
        )
        .unwrap()
    }

    #[test]
    fn linear_flan_monotonicity_matches_oracle() {
        let m = linear_model(&[0.3, -1.2, 2.0, 0.7, -0.1, 1.5]);
        let x = Matrix::row_vector(vec![0.5, 1.0, -0.3, 2.0, 1.1, -0.9]).unwrap();
        let a = attribute_flan(&m, &x).unwrap();
        let base = Matrix::zeros(1, 6);
        let got = monotonicity(&m, &x, &a, &base).unwrap();
        let effects = removal_effects(&m, &x, Provider::FlanNorm, &base, 0).unwrap();
        let want = spearman_oracle(&a.scores, &effects);
        assert!((got.value - want).abs() < 1e-12, "{} vs {want}", got.value);
    }

    #[test]
    fn non_sensitivity_examples() {
        // a model that ignores every feature
        let m = linear_model(&[0.0, 0.0, 0.0]);
        let x = Matrix::row_vector(vec![1.0, 2.0, 3.0]).unwrap();
        let a = attribute_flan(&m, &x).unwrap();
        assert_eq!(non_sensitivity(&m, &x, &a, &Matrix::zeros(1, 3), 1e-6, 1e-4).unwrap(), 0);

        // feature 0 is irrelevant but scored highest, feature 1 matters but scores zero
        let scores = [5.0, 0.0, 1.0];
        let effects = [0.0, 0.3, 0.2];
        assert_eq!(non_sensitivity_count(&scores, &effects, 1e-6, 1e-4).unwrap(), 2);
    }

    #[test]
    fn planted_task_matches_direct_set_computation() {
        let data = generate(&SyntheticSpec {
            generator: Generator::PlantedRelevance,
            n_samples: 10,
            n_features: 10,
            n_irrelevant: 4,
            noise_std: 0.0,
            seed: 2,
        })
        .unwrap();
        let mut w: Vec<f64> = (0..10).map(|i| 0.2 * (i as f64 + 1.0)).collect();
        for wi in w.iter_mut().skip(6) {
            *wi = 0.0;
        }
        let m = linear_model(&w);
        let base = Matrix::zeros(1, 10);
        for r in 0..10 {
            let x = data.sample(r).unwrap();
            for a in [attribute_flan(&m, &x).unwrap(), saliency(&m, &x, 0).unwrap()] {
                let scores = a.to_groups(m.partition()).unwrap().magnitudes();
                let effects = removal_effects(&m, &x, a.provider, &base, 0).unwrap();
                let claimed: std::collections::BTreeSet<usize> = (0..10).filter(|&i| scores[i] <= 1e-6).collect();
                let actual: std::collections::BTreeSet<usize> = (0..10).filter(|&i| effects[i] <= 1e-4).collect();
                let want = claimed.symmetric_difference(&actual).count();
                assert_eq!(non_sensitivity(&m, &x, &a, &base, 1e-6, 1e-4).unwrap(), want);
            }
        }
    }

    #[test]
    fn flan_removal_uses_partial_forward() {
        let m = linear_model(&[0.4, -0.9]);
        let x = Matrix::row_vector(vec![1.0, 2.0]).unwrap();
        let (out, bundle) = m.forward(&x).unwrap();
        let e = removal_effects(&m, &x, Provider::FlanNorm, &Matrix::zeros(1, 2), 0).unwrap();
        let drop0 = m.partial_forward(&bundle, &[1]).unwrap();
        let want = (m.link_value(&out, 0).unwrap() - m.link_value(&drop0, 0).unwrap()).abs();
        assert_eq!(e[0], want);
    }

    proptest! {
        #[test]
        fn monotone_transform_preserves_rank_correlation(
            pairs in prop::collection::vec((0.01f64..10.0, -5.0f64..5.0), 2..30),
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let t: Vec<f64> = a.iter().map(|v| v.ln() * 3.0 + 1.0).collect();
            let strictly = |v: &[f64], w: &[f64]| (0..v.len()).all(|i| (0..v.len()).all(|j| (v[i] < v[j]) == (w[i] < w[j])));
            prop_assume!(strictly(&a, &t));
            prop_assert_eq!(spearman(&a, &b).unwrap(), spearman(&t, &b).unwrap());
        }

        #[test]
        fn matching_zero_sets_give_zero(
            mask in prop::collection::vec(any::<bool>(), 1..20),
            mags in prop::collection::vec(0.5f64..100.0, 20),
        ) {
            let scores: Vec<f64> = mask.iter().zip(&mags).map(|(&z, &m)| if z { 0.0 } else { m }).collect();
            let effects: Vec<f64> = mask.iter().zip(mags.iter().rev()).map(|(&z, &m)| if z { 0.0 } else { m * 0.01 }).collect();
            prop_assert_eq!(non_sensitivity_count(&scores, &effects, 1e-6, 1e-4).unwrap(), 0);
        }
    }
}
