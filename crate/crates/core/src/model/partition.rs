use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PartitionKind {
    PerColumn,
    /// One group per token position; `lengths` holds the maximum length of
    /// each concatenated sequence and `token_width` the one-hot width.
    TokenSequence { lengths: Vec<usize>, token_width: usize },
    /// Row-major grid of `patch x patch` blocks over a `height x width` image.
    SquarePatch { height: usize, width: usize, patch: usize },
}

/// Grouping of raw input dimensions into the features that are encoded
/// separately. Groups are disjoint and cover every raw dimension once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePartition {
    raw_dim: usize,
    groups: Vec<Vec<usize>>,
    kind: PartitionKind,
    names: Vec<String>,
    binary: Vec<bool>,
}

impl FeaturePartition {
    pub fn new(raw_dim: usize, groups: Vec<Vec<usize>>, kind: PartitionKind) -> Result<Self> {
        let names = (0..groups.len()).map(|i| format!("f{i}")).collect();
        let binary = vec![false; groups.len()];
        let p = Self {
            raw_dim,
            groups,
            kind,
            names,
            binary,
        };
        p.validate()?;
        Ok(p)
    }

    /// One group per raw column.
    pub fn per_column(raw_dim: usize) -> Self {
        Self::new(raw_dim, (0..raw_dim).map(|i| vec![i]).collect(), PartitionKind::PerColumn)
            .expect("per-column partition is a valid cover")
    }

    /// A single group covering every dimension; the model degenerates to an MLP.
    pub fn single(raw_dim: usize) -> Self {
        Self::new(raw_dim, vec![(0..raw_dim).collect()], PartitionKind::PerColumn)
            .expect("single group is a valid cover")
    }

    pub fn square_patches(height: usize, width: usize, patch: usize) -> Result<Self> {
        if patch == 0 || height % patch != 0 || width % patch != 0 {
            return Err(Error::Data(format!(
                "image {height}x{width} is not divisible into {patch}x{patch} patches"
            )));
        }
        let mut groups = Vec::with_capacity((height / patch) * (width / patch));
        for pr in 0..height / patch {
            for pc in 0..width / patch {
                let mut g = Vec::with_capacity(patch * patch);
                for r in pr * patch..(pr + 1) * patch {
                    for c in pc * patch..(pc + 1) * patch {
                        g.push(r * width + c);
                    }
                }
                groups.push(g);
            }
        }
        Self::new(
            height * width,
            groups,
            PartitionKind::SquarePatch {
                height,
                width,
                patch,
            },
        )
    }

    /// Consecutive one-hot token slots: one group per position.
    pub fn token_sequence(lengths: Vec<usize>, token_width: usize) -> Result<Self> {
        let positions: usize = lengths.iter().sum();
        let groups = (0..positions)
            .map(|p| (p * token_width..(p + 1) * token_width).collect())
            .collect();
        Self::new(
            positions * token_width,
            groups,
            PartitionKind::TokenSequence {
                lengths,
                token_width,
            },
        )
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.groups.len() {
            return Err(Error::Contract(format!(
                "{} names for {} groups",
                names.len(),
                self.groups.len()
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn with_binary(mut self, binary: Vec<bool>) -> Result<Self> {
        if binary.len() != self.groups.len() {
            return Err(Error::Contract(format!(
                "{} binary flags for {} groups",
                binary.len(),
                self.groups.len()
            )));
        }
        self.binary = binary;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Contract("partition has no groups".into()));
        }
        let mut seen = vec![false; self.raw_dim];
        for (g, dims) in self.groups.iter().enumerate() {
            if dims.is_empty() {
                return Err(Error::Contract(format!("group {g} is empty")));
            }
            for &d in dims {
                if d >= self.raw_dim {
                    return Err(Error::Index {
                        what: "raw dimension",
                        index: d,
                        len: self.raw_dim,
                    });
                }
                if std::mem::replace(&mut seen[d], true) {
                    return Err(Error::Contract(format!(
                        "raw dimension {d} appears in more than one group"
                    )));
                }
            }
        }
        if let Some(d) = seen.iter().position(|s| !s) {
            return Err(Error::Contract(format!("raw dimension {d} is not covered")));
        }
        if let PartitionKind::SquarePatch {
            height,
            width,
            patch,
        } = self.kind
        {
            if height * width != self.raw_dim {
                return Err(Error::Contract("patch image size disagrees with raw dimension".into()));
            }
            for (g, dims) in self.groups.iter().enumerate() {
                let r0 = dims[0] / width;
                let c0 = dims[0] % width;
                let contiguous = dims.len() == patch * patch
                    && r0 % patch == 0
                    && c0 % patch == 0
                    && dims
                        .iter()
                        .enumerate()
                        .all(|(k, &d)| d == (r0 + k / patch) * width + c0 + k % patch);
                if !contiguous {
                    return Err(Error::Contract(format!("group {g} is not an aligned square patch")));
                }
            }
        }
        Ok(())
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> Result<&[usize]> {
        self.groups.get(i).map(Vec::as_slice).ok_or(Error::Index {
            what: "feature group",
            index: i,
            len: self.groups.len(),
        })
    }

    pub fn kind(&self) -> &PartitionKind {
        &self.kind
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_binary(&self, i: usize) -> bool {
        self.binary.get(i).copied().unwrap_or(false)
    }

    pub fn max_group_width(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Groups reordered by `order` (a permutation of group indices).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut check: Vec<usize> = order.to_vec();
        check.sort_unstable();
        if check != (0..self.len()).collect::<Vec<_>>() {
            return Err(Error::Contract("group order is not a permutation".into()));
        }
        Ok(Self {
            raw_dim: self.raw_dim,
            groups: order.iter().map(|&i| self.groups[i].clone()).collect(),
            kind: self.kind.clone(),
            names: order.iter().map(|&i| self.names[i].clone()).collect(),
            binary: order.iter().map(|&i| self.binary[i]).collect(),
        })
    }
}
