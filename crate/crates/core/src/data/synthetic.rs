use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Provenance, SplitSpec, Targets};
use crate::error::{Error, Result};
use crate::model::FeaturePartition;
use crate::numeric::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// Binary inputs; label is the parity of the first two columns.
    Xor,
    /// Uniform inputs in [-1, 1]; label thresholds a sum of per-column
    /// shape functions at its median.
    Additive,
    /// Uniform inputs in [-1, 1]; label is `x0 * x1 > 0`.
    Interaction,
    /// Standard normal inputs; label is `sum of the relevant columns > 0`.
    PlantedRelevance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n_samples: usize,
    pub n_features: usize,
    #[serde(default)]
    pub n_irrelevant: usize,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_irrelevant >= self.n_features {
            return Err(Error::config("synthetic.n-irrelevant", "must be below n-features"));
        }
        if matches!(self.generator, Generator::Xor | Generator::Interaction) && self.n_features < 2 {
            return Err(Error::config("synthetic.n-features", "generator needs at least two columns"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("synthetic.n-samples", "must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("synthetic.noise-std", "must be non-negative"));
        }
        Ok(())
    }

    pub fn relevant(&self) -> usize {
        self.n_features - self.n_irrelevant
    }
}

/// Shape function applied to relevant column `j` by the additive generator.
pub fn additive_shape(j: usize, x: f64) -> f64 {
    match j % 4 {
        0 => (std::f64::consts::PI * x).sin(),
        1 => x * x - 1.0 / 3.0,
        2 => 2.0 * x,
        _ => x.abs() - 0.5,
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Draws a synthetic classification task. Every row lands in the training
/// split; use [`Dataset::resplit`] for held-out data.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset<f64>> {
    spec.validate()?;
    let (n, d, r) = (spec.n_samples, spec.n_features, spec.relevant());
    let mut rng = Rng::new(spec.seed);
    let mut x = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let row = &mut x[i * d..(i + 1) * d];
        match spec.generator {
            Generator::Xor => {
                let pattern = i % 4;
                row[0] = (pattern >> 1) as f64;
                row[1] = (pattern & 1) as f64;
                for v in row.iter_mut().skip(2) {
                    *v = (rng.below(2)) as f64;
                }
                labels.push((pattern >> 1) ^ (pattern & 1));
                if spec.noise_std > 0.0 {
                    for v in row.iter_mut() {
                        *v += spec.noise_std * rng.normal();
                    }
                }
            }
            Generator::Additive => {
                for v in row.iter_mut() {
                    *v = rng.uniform_in(-1.0, 1.0);
                }
                let s: f64 = (0..r).map(|j| additive_shape(j, row[j])).sum();
                scores.push(s + spec.noise_std * rng.normal());
            }
            Generator::Interaction => {
                for v in row.iter_mut() {
                    *v = rng.uniform_in(-1.0, 1.0);
                }
                let s = row[0] * row[1] + spec.noise_std * rng.normal();
                labels.push(usize::from(s > 0.0));
            }
            Generator::PlantedRelevance => {
                for v in row.iter_mut() {
                    *v = rng.normal();
                }
                let s: f64 = row[..r].iter().sum::<f64>() + spec.noise_std * rng.normal();
                labels.push(usize::from(s > 0.0));
            }
        }
    }
    if spec.generator == Generator::Additive {
        let m = median(&scores);
        labels = scores.iter().map(|&s| usize::from(s > m)).collect();
    }
    let binary_cols = spec.generator == Generator::Xor && spec.noise_std == 0.0;
    let partition = FeaturePartition::per_column(d)
        .with_names((0..d).map(|j| format!("x{j}")).collect())?
        .with_binary(vec![binary_cols; d])?;
    Dataset::new(
        Matrix::from_vec(n, d, x)?,
        Targets::Classes { labels, classes: 2 },
        partition,
        SplitSpec::all_train().split(None, n, spec.seed)?,
        Provenance {
            source: format!("synthetic:{:?}", spec.generator),
            seed: Some(spec.seed),
            ..Provenance::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(generator: Generator, n: usize, d: usize, irrelevant: usize) -> SyntheticSpec {
        SyntheticSpec {
            generator,
            n_samples: n,
            n_features: d,
            n_irrelevant: irrelevant,
            noise_std: 0.0,
            seed: 5,
        }
    }

    #[test]
    fn xor_truth_table() {
        let d = generate(&spec(Generator::Xor, 4, 2, 0)).unwrap();
        let rows: Vec<(f64, f64, usize)> = (0..4)
            .map(|i| (d.inputs.get(i, 0), d.inputs.get(i, 1), d.targets.class(i).unwrap()))
            .collect();
        assert_eq!(rows, vec![(0.0, 0.0, 0), (0.0, 1.0, 1), (1.0, 0.0, 1), (1.0, 1.0, 0)]);
        assert!(d.partition.is_binary(0));
    }

    #[test]
    fn planted_single_relevant_column_is_a_stump() {
        let d = generate(&spec(Generator::PlantedRelevance, 200, 5, 4)).unwrap();
        for i in 0..200 {
            assert_eq!(d.targets.class(i).unwrap(), usize::from(d.inputs.get(i, 0) > 0.0));
        }
    }

    #[test]
    fn additive_labels_match_reevaluation() {
        let s = spec(Generator::Additive, 101, 6, 2);
        let d = generate(&s).unwrap();
        let score = |i: usize| -> f64 {
            let x = |j: usize| d.inputs.get(i, j);
            (std::f64::consts::PI * x(0)).sin() + (x(1) * x(1) - 1.0 / 3.0) + 2.0 * x(2) + (x(3).abs() - 0.5)
        };
        let mut all: Vec<f64> = (0..101).map(score).collect();
        all.sort_by(f64::total_cmp);
        let med = all[50];
        for i in 0..101 {
            assert_eq!(d.targets.class(i).unwrap(), usize::from(score(i) > med));
        }
    }

    #[test]
    fn interaction_sign_rule() {
        let d = generate(&spec(Generator::Interaction, 50, 4, 2)).unwrap();
        for i in 0..50 {
            let want = usize::from(d.inputs.get(i, 0) * d.inputs.get(i, 1) > 0.0);
            assert_eq!(d.targets.class(i).unwrap(), want);
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(generate(&spec(Generator::PlantedRelevance, 10, 3, 3)).is_err());
        assert!(generate(&spec(Generator::Xor, 10, 1, 0)).is_err());
    }

    #[test]
    fn deterministic() {
        let s = spec(Generator::Interaction, 30, 3, 1);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
    }
}
