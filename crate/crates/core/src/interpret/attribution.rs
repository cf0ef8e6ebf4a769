use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeaturePartition;
use crate::numeric::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provider {
    FlanNorm,
    Saliency,
    InputXGradient,
    IntegratedGradients,
}

impl Provider {
    pub const ALL: [Provider; 4] = [
        Provider::FlanNorm,
        Provider::Saliency,
        Provider::InputXGradient,
        Provider::IntegratedGradients,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Provider::FlanNorm => "flan-norm",
            Provider::Saliency => "saliency",
            Provider::InputXGradient => "input-x-gradient",
            Provider::IntegratedGradients => "integrated-gradients",
        }
    }

    pub fn is_post_hoc(self) -> bool {
        self != Provider::FlanNorm
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether scores are indexed by feature group or by raw input dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Group,
    Raw,
}

/// One importance score per feature group (or raw dimension) for one sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionVector<T> {
    pub provider: Provider,
    pub level: Level,
    pub scores: Vec<T>,
    /// Explained output index.
    pub target: usize,
}

impl<T: Scalar> AttributionVector<T> {
    pub fn group(provider: Provider, scores: Vec<T>, target: usize) -> Self {
        Self {
            provider,
            level: Level::Group,
            scores,
            target,
        }
    }

    pub fn raw(provider: Provider, scores: Vec<T>, target: usize) -> Self {
        Self {
            provider,
            level: Level::Raw,
            scores,
            target,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Group-level view: raw scores are summed over each group's members.
    pub fn to_groups(&self, partition: &FeaturePartition) -> Result<Self> {
        match self.level {
            Level::Group => {
                self.check_len(partition.len())?;
                Ok(self.clone())
            }
            Level::Raw => {
                self.check_len(partition.raw_dim())?;
                let scores = partition
                    .groups()
                    .iter()
                    .map(|g| g.iter().fold(T::zero(), |acc, &d| acc + self.scores[d]))
                    .collect();
                Ok(Self::group(self.provider, scores, self.target))
            }
        }
    }

    /// Raw-dimension view: group scores are copied to every member dimension.
    pub fn to_raw(&self, partition: &FeaturePartition) -> Result<Self> {
        match self.level {
            Level::Raw => {
                self.check_len(partition.raw_dim())?;
                Ok(self.clone())
            }
            Level::Group => {
                self.check_len(partition.len())?;
                let mut scores = vec![T::zero(); partition.raw_dim()];
                for (g, dims) in partition.groups().iter().enumerate() {
                    for &d in dims {
                        scores[d] = self.scores[g];
                    }
                }
                Ok(Self::raw(self.provider, scores, self.target))
            }
        }
    }

    fn check_len(&self, expected: usize) -> Result<()> {
        if self.scores.len() != expected {
            return Err(Error::Contract(format!(
                "{} attribution has {} scores, expected {expected}",
                self.provider,
                self.scores.len()
            )));
        }
        Ok(())
    }

    pub fn magnitudes(&self) -> Vec<T> {
        self.scores.iter().map(|s| s.abs()).collect()
    }

    /// Indices of the `k` largest-magnitude scores, largest first, ties by
    /// ascending index. `k` is clamped to the number of scores.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        top_k_indices(&self.magnitudes(), k)
    }
}

pub(crate) fn top_k_indices<T: Scalar>(values: &[T], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k.min(values.len()));
    idx
}
