//! Dataset loading, tokenization, synthetic generators and splits.

mod dataset;
mod delimited;
mod idx;
mod synthetic;
mod tokens;

pub use dataset::{Dataset, Provenance, SplitSpec, Splits, Targets};
pub use delimited::{load_delimited, write_delimited, ColumnKind, ColumnSpec, DatasetSchema, LoadOptions};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx_images, parse_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use synthetic::{additive_shape, generate, Generator, SyntheticSpec};
pub use tokens::{detokenize, load_sequences, tokenize_sequences, Alphabet, SequenceRecord};
