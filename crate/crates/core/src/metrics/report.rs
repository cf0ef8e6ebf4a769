use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::faithfulness::{monotonicity, non_sensitivity};
use super::prototypes::{
    diversity, k_medoids, local_example_metrics, non_representativeness, output_distributions, represent, Scope, Space,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interpret::{attribute, default_baseline, Provider};
use crate::model::{FlanModel, OutputKind};
use crate::numeric::{Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Monotonicity,
    NonSensitivity,
    Diversity,
    NonRepresentativeness,
}

impl MetricKind {
    /// Operational definition embedded in every report.
    pub fn definition(self) -> &'static str {
        match self {
            MetricKind::Monotonicity => {
                "Spearman rank correlation between per-group attribution magnitudes and removal effects \
                 |f(x) - f(x without group)| on the link scale; removal drops the latent (flan-norm) or \
                 substitutes the baseline (post-hoc). Constant ranks give 0 and count as degenerate."
            }
            MetricKind::NonSensitivity => {
                "Size of the symmetric difference between groups with |attribution| <= attribution-tol \
                 and groups with removal effect <= effect-tol."
            }
            MetricKind::Diversity => "Mean pairwise Euclidean distance between prototype representations.",
            MetricKind::NonRepresentativeness => {
                "Euclidean distance between output probability vectors of a point and its prototype: \
                 global = mean over training rows of the distance to the nearest k-medoids prototype; \
                 local = mean over queries of the mean distance to the query's local-k nearest training rows."
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_attribution_tol")]
    pub attribution_tol: f64,
    #[serde(default = "default_effect_tol")]
    pub effect_tol: f64,
    /// Neighbors per query for local example metrics.
    #[serde(default = "default_local_k")]
    pub local_k: usize,
    /// Number of k-medoids prototypes for global example metrics.
    #[serde(default = "default_prototypes")]
    pub prototypes: usize,
    #[serde(default = "default_spaces")]
    pub spaces: Vec<Space>,
    #[serde(default = "default_scopes")]
    pub scopes: Vec<Scope>,
}

fn default_attribution_tol() -> f64 {
    1e-6
}

fn default_effect_tol() -> f64 {
    1e-4
}

fn default_local_k() -> usize {
    5
}

fn default_prototypes() -> usize {
    12
}

fn default_spaces() -> Vec<Space> {
    vec![Space::Original, Space::Latent]
}

fn default_scopes() -> Vec<Scope> {
    vec![Scope::Global, Scope::Local]
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            attribution_tol: default_attribution_tol(),
            effect_tol: default_effect_tol(),
            local_k: default_local_k(),
            prototypes: default_prototypes(),
            spaces: default_spaces(),
            scopes: default_scopes(),
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.attribution_tol >= 0.0) || !(self.effect_tol >= 0.0) {
            return Err(Error::config("metrics", "tolerances must be non-negative"));
        }
        if self.local_k == 0 {
            return Err(Error::config("metrics.local-k", "must be at least 1"));
        }
        if self.prototypes < 2 {
            return Err(Error::config("metrics.prototypes", "diversity needs at least two prototypes"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub value: f64,
    /// Population standard deviation across samples (0 for a single value).
    pub std: f64,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<Provider>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<Space>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<Scope>,
    /// Samples whose rank correlation was undefined.
    pub degenerate: usize,
    pub per_sample: Vec<f64>,
    pub definition: &'static str,
    pub config: MetricsConfig,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Output explained by attributions: the positive class for binary models,
/// the predicted class for multiclass, the first output otherwise.
pub fn explained_target<T: Scalar>(model: &FlanModel<T>, x: &Matrix<T>) -> Result<usize> {
    Ok(match model.output_kind() {
        OutputKind::ClassLogits { .. } => model.predicted_class(&model.predict(x)?),
        _ => 0,
    })
}

/// Monotonicity and non-sensitivity per provider over `rows`.
pub fn attribution_reports<T: Scalar>(
    model: &FlanModel<T>,
    dataset: &Dataset<T>,
    rows: &[usize],
    providers: &[Provider],
    ig_steps: usize,
    config: &MetricsConfig,
) -> Result<Vec<MetricReport>> {
    config.validate()?;
    let baseline = default_baseline(dataset);
    let (tol, effect_tol) = (T::lit(config.attribution_tol), T::lit(config.effect_tol));
    let mut reports = Vec::new();
    for &provider in providers {
        let per: Vec<(f64, bool, f64)> = rows
            .par_iter()
            .map(|&r| {
                let x = dataset.sample(r)?;
                let target = explained_target(model, &x)?;
                let a = attribute(model, &x, provider, target, &baseline, ig_steps)?;
                let mono = monotonicity(model, &x, &a, &baseline)?;
                let ns = non_sensitivity(model, &x, &a, &baseline, tol, effect_tol)?;
                Ok((mono.value, mono.degenerate, ns as f64))
            })
            .collect::<Result<_>>()?;
        let mono: Vec<f64> = per.iter().map(|p| p.0).collect();
        let ns: Vec<f64> = per.iter().map(|p| p.2).collect();
        let degenerate = per.iter().filter(|p| p.1).count();
        for (metric, values, degenerate) in [
            (MetricKind::Monotonicity, mono, degenerate),
            (MetricKind::NonSensitivity, ns, 0),
        ] {
            let (value, std) = mean_std(&values);
            reports.push(MetricReport {
                metric,
                value,
                std,
                n: values.len(),
                provider: Some(provider),
                space: None,
                scope: None,
                degenerate,
                per_sample: values,
                definition: metric.definition(),
                config: config.clone(),
            });
        }
    }
    Ok(reports)
}

fn example_report(
    metric: MetricKind,
    values: Vec<f64>,
    space: Space,
    scope: Scope,
    config: &MetricsConfig,
) -> MetricReport {
    let (value, std) = mean_std(&values);
    MetricReport {
        metric,
        value,
        std,
        n: values.len(),
        provider: None,
        space: Some(space),
        scope: Some(scope),
        degenerate: 0,
        per_sample: values,
        definition: metric.definition(),
        config: config.clone(),
    }
}

/// Diversity and non-representativeness per configured space and scope.
/// The training split is the prototype corpus; `queries` drive the local
/// scope.
pub fn example_reports<T: Scalar>(
    model: &FlanModel<T>,
    dataset: &Dataset<T>,
    queries: &[usize],
    seed: u64,
    config: &MetricsConfig,
) -> Result<Vec<MetricReport>> {
    config.validate()?;
    let corpus = &dataset.splits.train;
    if corpus.is_empty() {
        return Err(Error::Contract("example metrics need a nonempty training split".into()));
    }
    let corpus_out = output_distributions(model, dataset, corpus)?;
    let query_out = output_distributions(model, dataset, queries)?;
    let mut reports = Vec::new();
    for &space in &config.spaces {
        let reps = represent(model, dataset, corpus, space)?;
        for &scope in &config.scopes {
            match scope {
                Scope::Global => {
                    let k = config.prototypes.min(corpus.len());
                    let protos = k_medoids(&reps, k, seed)?;
                    let div = if k >= 2 {
                        vec![diversity(&reps.gather_rows(&protos.members)?)?.to_f64_lossy()]
                    } else {
                        vec![]
                    };
                    let nr = non_representativeness(&reps, &corpus_out, &protos.members)?.to_f64_lossy();
                    reports.push(example_report(MetricKind::Diversity, div, space, scope, config));
                    reports.push(example_report(MetricKind::NonRepresentativeness, vec![nr], space, scope, config));
                }
                Scope::Local => {
                    let query_reps = represent(model, dataset, queries, space)?;
                    let (nr, div) = local_example_metrics(&query_reps, &query_out, &reps, &corpus_out, config.local_k)?;
                    let to64 = |v: Vec<T>| v.into_iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
                    reports.push(example_report(MetricKind::Diversity, to64(div), space, scope, config));
                    reports.push(example_report(MetricKind::NonRepresentativeness, to64(nr), space, scope, config));
                }
            }
        }
    }
    Ok(reports)
}
