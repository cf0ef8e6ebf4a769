use serde::Serialize;

use super::attribution::{AttributionVector, Provider};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{FlanModel, PartitionKind};
use crate::numeric::{Matrix, Scalar};

/// `|d output_target / d x_d|` per raw dimension.
pub fn saliency<T: Scalar>(model: &FlanModel<T>, x: &Matrix<T>, target: usize) -> Result<AttributionVector<T>> {
    let (_, grad) = model.input_gradient(x, target)?;
    Ok(AttributionVector::raw(
        Provider::Saliency,
        grad.as_slice().iter().map(|g| g.abs()).collect(),
        target,
    ))
}

/// `x_d * d output_target / d x_d` per raw dimension.
pub fn input_x_gradient<T: Scalar>(model: &FlanModel<T>, x: &Matrix<T>, target: usize) -> Result<AttributionVector<T>> {
    let (_, grad) = model.input_gradient(x, target)?;
    Ok(AttributionVector::raw(
        Provider::InputXGradient,
        x.as_slice().iter().zip(grad.as_slice()).map(|(&xi, &g)| xi * g).collect(),
        target,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegratedGradients<T> {
    pub attribution: AttributionVector<T>,
    /// `|sum(scores) - (f(x) - f(baseline))|` on the raw output.
    pub completeness_gap: T,
}

/// Path integral of the input gradient from `baseline` to `x`, approximated
/// with the midpoint rule on `steps` intervals.
pub fn integrated_gradients<T: Scalar>(
    model: &FlanModel<T>,
    x: &Matrix<T>,
    baseline: &Matrix<T>,
    target: usize,
    steps: usize,
) -> Result<IntegratedGradients<T>> {
    if steps == 0 {
        return Err(Error::Contract("integrated gradients needs at least one step".into()));
    }
    if baseline.shape() != x.shape() {
        return Err(Error::Shape {
            op: "integrated_gradients baseline",
            left: x.shape(),
            right: baseline.shape(),
        });
    }
    let delta = x.sub(baseline)?;
    let mut acc = Matrix::zeros(x.rows(), x.cols());
    let n = T::from_count(steps);
    let half = T::lit(0.5);
    for k in 0..steps {
        let alpha = (T::from_count(k) + half) / n;
        let point = baseline.add(&delta.scale(alpha))?;
        let (_, grad) = model.input_gradient(&point, target)?;
        acc.add_assign(&grad)?;
    }
    let scores: Vec<T> = acc
        .as_slice()
        .iter()
        .zip(delta.as_slice())
        .map(|(&g, &d)| d * g / n)
        .collect();
    let fx = model.predict(x)?.get(0, target);
    let fb = model.predict(baseline)?.get(0, target);
    let total = scores.iter().fold(T::zero(), |a, &s| a + s);
    Ok(IntegratedGradients {
        completeness_gap: (total - (fx - fb)).abs(),
        attribution: AttributionVector::raw(Provider::IntegratedGradients, scores, target),
    })
}

/// Attribution of `x` by any provider. Post-hoc scores are per raw
/// dimension; flan-norm scores are per group.
pub fn attribute<T: Scalar>(
    model: &FlanModel<T>,
    x: &Matrix<T>,
    provider: Provider,
    target: usize,
    baseline: &Matrix<T>,
    ig_steps: usize,
) -> Result<AttributionVector<T>> {
    match provider {
        Provider::FlanNorm => super::native::attribute_flan(model, x).map(|mut a| {
            a.target = target;
            a
        }),
        Provider::Saliency => saliency(model, x, target),
        Provider::InputXGradient => input_x_gradient(model, x, target),
        Provider::IntegratedGradients => Ok(integrated_gradients(model, x, baseline, target, ig_steps)?.attribution),
    }
}

/// Integrated-gradients baseline: zero for standardized per-column data,
/// the training-split mean otherwise.
pub fn default_baseline<T: Scalar>(dataset: &Dataset<T>) -> Matrix<T> {
    let standardized_tabular =
        matches!(dataset.partition.kind(), PartitionKind::PerColumn) && !dataset.provenance.standardization.is_empty();
    if standardized_tabular {
        Matrix::zeros(1, dataset.raw_dim())
    } else {
        dataset.train_mean()
    }
}
