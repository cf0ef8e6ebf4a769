use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Provenance, SplitSpec, Targets};
use crate::error::{Error, Result};
use crate::model::{FeaturePartition, PartitionKind};
use crate::numeric::Matrix;

/// One labelled record: a sequence and an optional partner sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub first: String,
    #[serde(default)]
    pub second: Option<String>,
    pub label: usize,
}

/// Symbol table with a reserved PAD code in the last slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(Error::config("alphabet", format!("symbol `{c}` repeated")));
            }
        }
        Ok(Self { symbols })
    }

    /// One-hot width including PAD.
    pub fn width(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn pad(&self) -> usize {
        self.symbols.len()
    }

    fn code(&self, c: char) -> Result<usize> {
        self.symbols
            .iter()
            .position(|&s| s == c)
            .ok_or_else(|| Error::Data(format!("unknown symbol `{c}`")))
    }
}

/// Reads records from a comma-separated file with a `first,second,label`
/// header; `second` may be absent or empty.
pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<SequenceRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path.as_ref())?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        let rec: SequenceRecord = rec?;
        out.push(SequenceRecord {
            second: rec.second.filter(|s| !s.is_empty()),
            ..rec
        });
    }
    Ok(out)
}

/// One-hot encodes each position as one feature group; shorter sequences
/// are filled with PAD. Paired sequences are laid out first then second.
pub fn tokenize_sequences(
    records: &[SequenceRecord],
    alphabet: &Alphabet,
    max_lens: (usize, usize),
    split: &SplitSpec,
    seed: u64,
) -> Result<Dataset<f64>> {
    let lengths = if max_lens.1 > 0 {
        vec![max_lens.0, max_lens.1]
    } else {
        vec![max_lens.0]
    };
    let partition = FeaturePartition::token_sequence(lengths, alphabet.width())?;
    let width = alphabet.width();
    let dim = partition.raw_dim();
    let mut data = vec![0.0; records.len() * dim];
    let mut labels = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        let row = &mut data[r * dim..(r + 1) * dim];
        let second = rec.second.as_deref().unwrap_or("");
        for (slot0, seq, max) in [(0, rec.first.as_str(), max_lens.0), (max_lens.0, second, max_lens.1)] {
            let chars: Vec<char> = seq.chars().collect();
            if chars.len() > max {
                return Err(Error::Data(format!(
                    "record {r}: sequence of length {} exceeds maximum {max}",
                    chars.len()
                )));
            }
            for pos in 0..max {
                let code = match chars.get(pos) {
                    Some(&c) => alphabet.code(c)?,
                    None => alphabet.pad(),
                };
                row[(slot0 + pos) * width + code] = 1.0;
            }
        }
        labels.push(rec.label);
    }
    let n = records.len();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let splits = split.split(Some(&labels), n, seed)?;
    Dataset::new(
        Matrix::from_vec(n, dim, data)?,
        Targets::Classes { labels, classes },
        partition,
        splits,
        Provenance {
            source: "sequences".into(),
            seed: Some(split.seed.unwrap_or(seed)),
            ..Provenance::default()
        },
    )
}

/// Inverse of [`tokenize_sequences`] for one row.
pub fn detokenize(dataset: &Dataset<f64>, row: usize, alphabet: &Alphabet) -> Result<(String, Option<String>)> {
    let PartitionKind::TokenSequence { lengths, token_width } = dataset.partition.kind() else {
        return Err(Error::Contract("dataset is not a token sequence".into()));
    };
    let x = dataset.sample(row)?;
    let mut out = Vec::new();
    let mut pos = 0;
    for &len in lengths {
        let mut s = String::new();
        for _ in 0..len {
            let slot = &x.as_slice()[pos * token_width..(pos + 1) * token_width];
            let code = slot
                .iter()
                .position(|&v| v == 1.0)
                .ok_or_else(|| Error::Data(format!("position {pos} has no token")))?;
            if code != alphabet.pad() {
                s.push(alphabet.symbols[code]);
            }
            pos += 1;
        }
        out.push(s);
    }
    let second = (out.len() > 1).then(|| out.pop().expect("two sequences"));
    Ok((out.pop().expect("one sequence"), second))
}

#[cfg(test)]
mod tests {
    use super::*;

    const AMINO: &str = "ACDEFGHIKLMNPQRSTVWY";

    fn rec(a: &str, b: Option<&str>, label: usize) -> SequenceRecord {
        SequenceRecord {
            first: a.into(),
            second: b.map(Into::into),
            label,
        }
    }

    #[test]
    fn single_sequence_positions_are_groups() {
        let alpha = Alphabet::new(AMINO).unwrap();
        assert_eq!(alpha.width(), 21);
        let d = tokenize_sequences(&[rec("ACD", None, 0), rec("W", None, 1)], &alpha, (5, 0), &SplitSpec::all_train(), 0)
            .unwrap();
        assert_eq!(d.partition.len(), 5);
        assert!(d.partition.groups().iter().all(|g| g.len() == 21));
        // second row: W then four PADs
        assert_eq!(d.inputs.get(1, 18), 1.0);
        assert_eq!(d.inputs.get(1, 21 + 20), 1.0);
    }

    #[test]
    fn paired_round_trip() {
        let alpha = Alphabet::new(AMINO).unwrap();
        let records = vec![rec("CASS", Some("GILGF"), 1), rec("CAW", Some("NLV"), 0), rec("", Some("K"), 0)];
        let d = tokenize_sequences(&records, &alpha, (6, 9), &SplitSpec::all_train(), 0).unwrap();
        assert_eq!(d.partition.len(), 15);
        for (i, r) in records.iter().enumerate() {
            let (a, b) = detokenize(&d, i, &alpha).unwrap();
            assert_eq!(a, r.first);
            assert_eq!(b, r.second);
        }
    }

    #[test]
    fn sequence_file_with_empty_partner() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("seq.csv");
        std::fs::write(&p, "first,second,label\nCASS,GIL,1\nCAW,,0\n").unwrap();
        let recs = load_sequences(&p).unwrap();
        assert_eq!(recs, vec![rec("CASS", Some("GIL"), 1), rec("CAW", None, 0)]);
        std::fs::write(&p, "first,label\nAC,1\n").unwrap();
        assert_eq!(load_sequences(&p).unwrap(), vec![rec("AC", None, 1)]);
    }

    #[test]
    fn unknown_symbol_and_overlong_rejected() {
        let alpha = Alphabet::new(AMINO).unwrap();
        assert!(tokenize_sequences(&[rec("AXA", None, 0)], &alpha, (5, 0), &SplitSpec::all_train(), 0).is_err());
        assert!(tokenize_sequences(&[rec("AAAAAA", None, 0)], &alpha, (5, 0), &SplitSpec::all_train(), 0).is_err());
        assert!(tokenize_sequences(&[rec("A", Some("C"), 0)], &alpha, (5, 0), &SplitSpec::all_train(), 0).is_err());
    }
}
