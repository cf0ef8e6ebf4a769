//! Native FLAN explanations (latent norms, partial predictions, example
//! retrieval with feature matching) and gradient-based post-hoc baselines.

mod assignment;
mod attribution;
mod examples;
mod native;
mod posthoc;

pub use assignment::{linear_assignment, match_features, match_latent_rows, AssignmentResult, MatchObjective};
pub use attribution::{AttributionVector, Level, Provider};
pub use examples::{explain_examples, nearest_examples, ExampleExplanation, LatentCorpus, Neighbor};
pub use native::{attribute_flan, binary_flip_effect, mean_importance, partial_probabilities, MeanImportance};
pub use posthoc::{attribute, default_baseline, input_x_gradient, integrated_gradients, saliency, IntegratedGradients};
