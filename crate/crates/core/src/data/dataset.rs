use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FeaturePartition;
use crate::numeric::{Matrix, Rng, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub enum Targets<T> {
    Classes { labels: Vec<usize>, classes: usize },
    Values(Matrix<T>),
}

impl<T: Scalar> Targets<T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class(&self, i: usize) -> Option<usize> {
        match self {
            Targets::Classes { labels, .. } => labels.get(i).copied(),
            Targets::Values(_) => None,
        }
    }
}

/// Disjoint row index sets covering the dataset.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    /// Fixed split seed; when absent the run seed is used.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_true() -> bool {
    true
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
            stratified: true,
            seed: None,
        }
    }
}

impl SplitSpec {
    /// Every row in the training split.
    pub fn all_train() -> Self {
        Self {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
            stratified: false,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "fractions must lie in [0, 1] and sum to 1"));
        }
        if self.train == 0.0 {
            return Err(Error::config("split.train", "training fraction must be positive"));
        }
        Ok(())
    }

    /// Index sets for `n` rows. With stratification each class is split
    /// separately, so per-class counts deviate from the exact fractions by
    /// less than one row.
    pub fn split(&self, labels: Option<&[usize]>, n: usize, run_seed: u64) -> Result<Splits> {
        self.validate()?;
        let mut rng = Rng::stream(self.seed.unwrap_or(run_seed), 0x5B11);
        let strata: Vec<Vec<usize>> = match labels {
            Some(labels) if self.stratified => {
                let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
                let mut s = vec![Vec::new(); classes];
                for (i, &c) in labels.iter().enumerate() {
                    s[c].push(i);
                }
                s
            }
            _ => vec![(0..n).collect()],
        };
        let mut splits = Splits::default();
        for mut members in strata {
            rng.shuffle(&mut members);
            let m = members.len();
            let n_train = (((m as f64) * self.train).round() as usize).min(m);
            let n_val = (((m as f64) * self.validation).round() as usize).min(m - n_train);
            splits.train.extend_from_slice(&members[..n_train]);
            splits.validation.extend_from_slice(&members[n_train..n_train + n_val]);
            splits.test.extend_from_slice(&members[n_train + n_val..]);
        }
        splits.train.sort_unstable();
        splits.validation.sort_unstable();
        splits.test.sort_unstable();
        Ok(splits)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub source: String,
    pub seed: Option<u64>,
    pub dropped_rows: usize,
    /// `(mean, std)` per standardized raw column, fitted on the train split.
    pub standardization: Vec<(usize, f64, f64)>,
}

/// Inputs, targets, feature partition and splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Matrix<T>,
    pub targets: Targets<T>,
    pub partition: FeaturePartition,
    pub splits: Splits,
    pub provenance: Provenance,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        inputs: Matrix<T>,
        targets: Targets<T>,
        partition: FeaturePartition,
        splits: Splits,
        provenance: Provenance,
    ) -> Result<Self> {
        let d = Self {
            inputs,
            targets,
            partition,
            splits,
            provenance,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        if self.inputs.cols() != self.partition.raw_dim() {
            return Err(Error::Shape {
                op: "dataset partition",
                left: self.inputs.shape(),
                right: (self.inputs.rows(), self.partition.raw_dim()),
            });
        }
        if self.targets.len() != self.inputs.rows() {
            return Err(Error::Data(format!(
                "{} targets for {} rows",
                self.targets.len(),
                self.inputs.rows()
            )));
        }
        let mut seen = vec![false; self.len()];
        for &i in self
            .splits
            .train
            .iter()
            .chain(&self.splits.validation)
            .chain(&self.splits.test)
        {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Data(format!("row {i} is out of range or in two splits")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("splits do not cover every row".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn raw_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn sample(&self, i: usize) -> Result<Matrix<T>> {
        if i >= self.len() {
            return Err(Error::Index {
                what: "sample",
                index: i,
                len: self.len(),
            });
        }
        Ok(self.inputs.row_matrix(i))
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    /// Re-split with `spec`.
    pub fn resplit(mut self, spec: &SplitSpec, run_seed: u64) -> Result<Self> {
        let labels = self.class_labels().map(<[usize]>::to_vec);
        self.splits = spec.split(labels.as_deref(), self.len(), run_seed)?;
        self.validate()?;
        Ok(self)
    }

    /// Per-column mean over the training split.
    pub fn train_mean(&self) -> Matrix<T> {
        let mut acc = Matrix::zeros(1, self.raw_dim());
        for &i in &self.splits.train {
            for c in 0..self.raw_dim() {
                acc.set(0, c, acc.get(0, c) + self.inputs.get(i, c));
            }
        }
        let n = T::from_count(self.splits.train.len().max(1));
        acc.map(|v| v / n)
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            inputs: self.inputs.cast(),
            targets: match &self.targets {
                Targets::Classes { labels, classes } => Targets::Classes {
                    labels: labels.clone(),
                    classes: *classes,
                },
                Targets::Values(m) => Targets::Values(m.cast()),
            },
            partition: self.partition.clone(),
            splits: self.splits.clone(),
            provenance: self.provenance.clone(),
        }
    }
}
