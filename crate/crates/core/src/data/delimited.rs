use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Provenance, SplitSpec, Targets};
use crate::error::{Error, Result};
use crate::model::{FeaturePartition, PartitionKind};
use crate::numeric::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum ColumnKind {
    /// Standardized with train-split statistics; one single-column group.
    Numeric,
    /// `0` / `1`, kept as is; one single-column group.
    Binary,
    /// Closed set of levels, one-hot encoded into one group.
    Categorical { levels: Vec<String> },
}

/// Serialized flat as `{"name": .., "type": .., "levels": [..]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawColumn", into = "RawColumn")]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawColumn {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
}

impl TryFrom<RawColumn> for ColumnSpec {
    type Error = String;

    fn try_from(raw: RawColumn) -> std::result::Result<Self, String> {
        let kind = match (raw.kind.as_str(), raw.levels) {
            ("numeric", None) => ColumnKind::Numeric,
            ("binary", None) => ColumnKind::Binary,
            ("categorical", Some(levels)) => ColumnKind::Categorical { levels },
            ("categorical", None) => return Err(format!("column `{}`: categorical needs `levels`", raw.name)),
            ("numeric" | "binary", Some(_)) => {
                return Err(format!("column `{}`: only categorical columns take `levels`", raw.name))
            }
            (other, _) => return Err(format!("column `{}`: unknown type `{other}`", raw.name)),
        };
        Ok(Self { name: raw.name, kind })
    }
}

impl From<ColumnSpec> for RawColumn {
    fn from(c: ColumnSpec) -> Self {
        let (kind, levels) = match c.kind {
            ColumnKind::Numeric => ("numeric", None),
            ColumnKind::Binary => ("binary", None),
            ColumnKind::Categorical { levels } => ("categorical", Some(levels)),
        };
        RawColumn {
            name: c.name,
            kind: kind.into(),
            levels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DatasetSchema {
    pub columns: Vec<ColumnSpec>,
    pub label: String,
    /// Label spellings mapped to class indices in order. When absent labels
    /// must be non-negative integers.
    #[serde(default)]
    pub label_levels: Option<Vec<String>>,
}

impl DatasetSchema {
    pub fn raw_dim(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match &c.kind {
                ColumnKind::Categorical { levels } => levels.len(),
                _ => 1,
            })
            .sum()
    }

    pub fn partition(&self) -> Result<FeaturePartition> {
        let mut groups = Vec::with_capacity(self.columns.len());
        let mut offset = 0;
        for c in &self.columns {
            let width = match &c.kind {
                ColumnKind::Categorical { levels } => {
                    if levels.is_empty() {
                        return Err(Error::config(format!("schema.columns.{}", c.name), "no levels"));
                    }
                    levels.len()
                }
                _ => 1,
            };
            groups.push((offset..offset + width).collect());
            offset += width;
        }
        FeaturePartition::new(offset, groups, PartitionKind::PerColumn)?
            .with_names(self.columns.iter().map(|c| c.name.clone()).collect())?
            .with_binary(
                self.columns
                    .iter()
                    .map(|c| matches!(c.kind, ColumnKind::Binary))
                    .collect(),
            )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadOptions {
    pub split: SplitSpec,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            standardize: true,
            seed: 0,
        }
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "?" | "NA" | "NaN" | "nan" | "null")
}

/// Reads a comma-separated file with a header row.
///
/// Rows with a missing value are dropped (and counted). Numeric columns are
/// standardized with statistics of the train split only.
pub fn load_delimited(path: impl AsRef<Path>, schema: &DatasetSchema, opts: &LoadOptions) -> Result<Dataset<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("column `{name}` missing from {}", path.display())))
    };
    let col_pos = schema
        .columns
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<Vec<_>>>()?;
    let label_pos = position(&schema.label)?;
    for h in header.iter() {
        let h = h.trim();
        if h != schema.label && !schema.columns.iter().any(|c| c.name == h) {
            return Err(Error::Data(format!("column `{h}` is not declared in the schema")));
        }
    }

    let partition = schema.partition()?;
    let dim = partition.raw_dim();
    let mut rows: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let fields: Vec<&str> = col_pos.iter().map(|&p| record.get(p).unwrap_or("")).collect();
        let label_field = record.get(label_pos).unwrap_or("");
        if fields.iter().any(|f| is_missing(f)) || is_missing(label_field) {
            dropped += 1;
            continue;
        }
        let row_no = line + 2;
        for (c, f) in schema.columns.iter().zip(&fields) {
            let f = f.trim();
            match &c.kind {
                ColumnKind::Numeric => rows.push(f.parse::<f64>().map_err(|_| {
                    Error::Data(format!("row {row_no}: `{f}` in `{}` is not numeric", c.name))
                })?),
                ColumnKind::Binary => rows.push(match f {
                    "0" | "0.0" | "false" => 0.0,
                    "1" | "1.0" | "true" => 1.0,
                    _ => {
                        return Err(Error::Data(format!(
                            "row {row_no}: `{f}` in binary column `{}`",
                            c.name
                        )))
                    }
                }),
                ColumnKind::Categorical { levels } => {
                    let k = levels.iter().position(|l| l == f).ok_or_else(|| {
                        Error::Data(format!("row {row_no}: unseen level `{f}` in `{}`", c.name))
                    })?;
                    rows.extend((0..levels.len()).map(|j| if j == k { 1.0 } else { 0.0 }));
                }
            }
        }
        labels.push(parse_label(label_field.trim(), schema, row_no)?);
    }
    if dropped > 0 {
        warn!("{}: dropped {dropped} rows with missing values", path.display());
    }
    let n = labels.len();
    if n == 0 {
        return Err(Error::Data(format!("{} has no usable rows", path.display())));
    }
    let classes = match &schema.label_levels {
        Some(levels) => levels.len(),
        None => labels.iter().max().map_or(0, |m| m + 1).max(2),
    };
    let splits = opts.split.split(Some(&labels), n, opts.seed)?;
    let mut inputs = Matrix::from_vec(n, dim, rows)?;

    let mut stats = Vec::new();
    if opts.standardize {
        for (g, c) in schema.columns.iter().enumerate() {
            if !matches!(c.kind, ColumnKind::Numeric) {
                continue;
            }
            let col = partition.groups()[g][0];
            let (mean, std) = column_stats(&inputs, col, &splits.train);
            for r in 0..n {
                inputs.set(r, col, (inputs.get(r, col) - mean) / std);
            }
            stats.push((col, mean, std));
        }
    }

    Dataset::new(
        inputs,
        Targets::Classes { labels, classes },
        partition,
        splits,
        Provenance {
            source: path.display().to_string(),
            seed: Some(opts.split.seed.unwrap_or(opts.seed)),
            dropped_rows: dropped,
            standardization: stats,
        },
    )
}

fn parse_label(s: &str, schema: &DatasetSchema, row_no: usize) -> Result<usize> {
    match &schema.label_levels {
        Some(levels) => levels
            .iter()
            .position(|l| l == s)
            .ok_or_else(|| Error::Data(format!("row {row_no}: unseen label `{s}`"))),
        None => s
            .parse::<usize>()
            .or_else(|_| match s.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
                _ => Err(()),
            })
            .map_err(|_| Error::Data(format!("row {row_no}: label `{s}` is not a class index"))),
    }
}

/// Mean and population standard deviation over `rows`; a constant column
/// gets std 1.
fn column_stats(m: &Matrix<f64>, col: usize, rows: &[usize]) -> (f64, f64) {
    let n = rows.len().max(1) as f64;
    let mean = rows.iter().map(|&r| m.get(r, col)).sum::<f64>() / n;
    let var = rows.iter().map(|&r| (m.get(r, col) - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// Writes `inputs` and class `labels` as a delimited file with the given
/// column names plus a trailing `label` column. Values use the shortest
/// representation that parses back to the same float.
pub fn write_delimited(path: impl AsRef<Path>, names: &[String], inputs: &Matrix<f64>, labels: &[usize]) -> Result<()> {
    if names.len() != inputs.cols() || labels.len() != inputs.rows() {
        return Err(Error::Contract("column names or labels do not match the matrix".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = names.to_vec();
    header.push("label".into());
    w.write_record(&header)?;
    for r in 0..inputs.rows() {
        let mut rec: Vec<String> = inputs.row(r).iter().map(|v| v.to_string()).collect();
        rec.push(labels[r].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
