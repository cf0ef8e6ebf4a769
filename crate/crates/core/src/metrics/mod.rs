//! Functionally-grounded explanation metrics: monotonicity and
//! non-sensitivity for attributions, diversity and non-representativeness
//! for example sets, and k-medoids prototype selection.

mod faithfulness;
mod prototypes;
mod report;

pub use faithfulness::{
    group_magnitudes, midranks, monotonicity, non_sensitivity, non_sensitivity_count, removal_effects, spearman,
    RankCorrelation,
};
pub use prototypes::{
    diversity, k_medoids, k_nearest, local_example_metrics, non_representativeness, output_distributions, represent,
    PrototypeSet, Scope, Space,
};
pub use report::{
    attribution_reports, example_reports, explained_target, mean_std, MetricKind, MetricReport, MetricsConfig,
};
